"""End-to-end runs: study server, victim server, correlation, search, report."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field, fields, replace
from pathlib import Path

import numpy as np

from .aes import encrypt_payload
from .analysis import CountermeasureReport, SearchBench, emit_report, missing_bytes, overhead_multiple
from .attack import (
    DEFAULT_ALPHA,
    CandidateKeySpace,
    TimingProfile,
    brute_force,
    build_profile,
    collect,
    correlate,
    keyspace_size,
)
from .cache import LAB_CACHE, CacheConfig, simulate_encryption
from .countermeasure import PaddingPolicy, packet_cycles
from .server import DEFAULT_PACKET, OracleClient, OracleConfig, OracleServer, TimingOracle

log = logging.getLogger(__name__)

DEFEAT_KEYSPACE = 2**100


@dataclass
class ExperimentConfig:
    server: str = "127.0.0.1:9000"
    packet_size: int = DEFAULT_PACKET
    attack_packet_size: int = 16
    samples: int = 65536
    key_seed: int = 0
    study_seed: int = 1
    attack_seed: int = 2
    overhead_seed: int = 3
    overhead_packets: int = 200
    cache: str = ""
    policy: str = "none"
    alpha: float = DEFAULT_ALPHA
    max_search_keys: int = 10**8
    out: str = "results"

    @classmethod
    def from_text(cls, text: str, base: "ExperimentConfig | None" = None) -> "ExperimentConfig":
        cfg = base or cls()
        types = {f.name: f.type for f in fields(cls)}
        for lineno, line in enumerate(text.splitlines(), 1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ValueError(f"line {lineno}: expected key = value")
            k, v = (s.strip() for s in line.split("=", 1))
            k = k.replace("-", "_")
            if k not in types:
                raise ValueError(f"line {lineno}: unknown key {k!r}")
            setattr(cfg, k, {"int": int, "float": float}.get(types[k], str)(v))
        return cfg

    def cache_config(self) -> CacheConfig:
        return CacheConfig.load(self.cache) if self.cache else LAB_CACHE

    def padding_policy(self) -> PaddingPolicy:
        return PaddingPolicy.parse(self.policy)

    def address(self) -> tuple[str, int]:
        host, _, port = self.server.rpartition(":")
        return host or "127.0.0.1", int(port)

    def validate(self) -> None:
        self.padding_policy()
        self.cache_config()
        if self.samples < 1:
            raise ValueError("samples must be >= 1")
        for size in (self.packet_size, self.attack_packet_size):
            if size < 16 or size % 16:
                raise ValueError(f"packet size {size} must be a positive multiple of 16")


def random_key(rng: np.random.Generator) -> bytes:
    return rng.bytes(16)


def lab_keys(seed: int) -> tuple[bytes, bytes]:
    """``(victim_key, study_key)`` drawn from one seed."""
    rng = np.random.default_rng(seed)
    return random_key(rng), random_key(rng)


def average_cycles(
    key: bytes,
    policy: PaddingPolicy,
    cache: CacheConfig,
    n_packets: int = 200,
    packet_size: int = DEFAULT_PACKET,
    seed: int = 0,
) -> float:
    """Mean simulated cycles per packet for random payloads."""
    rng = np.random.default_rng(seed)
    noise = np.random.default_rng(cache.rng_seed)
    total = 0
    for _ in range(n_packets):
        _, trace = encrypt_payload(key, rng.bytes(packet_size))
        total += packet_cycles(simulate_encryption(trace, cache, noise), policy)
    return total / n_packets


@dataclass
class AttackOutcome:
    secret_key: bytes
    study_key: bytes
    space: CandidateKeySpace
    study: TimingProfile
    attack: TimingProfile
    zeros: bytes
    found: bytes | None = None
    trials: int | None = None

    @property
    def keyspace(self) -> int:
        return keyspace_size(self.space)

    @property
    def missing(self) -> int:
        return missing_bytes(self.space, self.secret_key)

    @property
    def recovered(self) -> bool:
        return self.found == self.secret_key

    @property
    def defeated(self) -> bool:
        return self.missing >= 1 or self.keyspace > DEFEAT_KEYSPACE


def simulated_attack(
    secret_key: bytes,
    study_key: bytes,
    policy: PaddingPolicy,
    cache: CacheConfig,
    samples: int = 65536,
    packet_size: int = 16,
    study_seed: int = 1,
    attack_seed: int = 2,
    alpha: float = DEFAULT_ALPHA,
    max_search_keys: int = 10**8,
) -> AttackOutcome:
    """The full attack against in-process oracles (no sockets)."""
    study_oracle = TimingOracle(OracleConfig(study_key, policy, cache=cache))
    victim = TimingOracle(OracleConfig(secret_key, policy, cache=_victim_cache(cache)))
    study = build_profile(collect(study_oracle, samples, packet_size, study_seed))
    attack = build_profile(collect(victim, samples, packet_size, attack_seed))
    out = AttackOutcome(secret_key, study_key, correlate(study, study_key, attack, alpha), study, attack, victim.zeros)
    if out.keyspace <= max_search_keys:
        res = brute_force(out.space, victim.zeros)
        out.found, out.trials = res.key, res.trials
    return out


def _victim_cache(cache: CacheConfig) -> CacheConfig:
    # same machine image, independent noise stream
    return replace(cache, rng_seed=cache.rng_seed + 1)


@dataclass
class E2EResult:
    outcome: AttackOutcome
    policy: PaddingPolicy
    report: CountermeasureReport
    files: list[Path] = field(default_factory=list)

    @property
    def success(self) -> bool:
        if self.policy.kind == "none":
            return self.outcome.recovered
        return self.outcome.defeated


def run_e2e(cfg: ExperimentConfig, bench: SearchBench | None = None) -> E2EResult:
    """Serve both keys on loopback, attack through the wire, write every artifact."""
    cfg.validate()
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    cache = cfg.cache_config()
    policy = cfg.padding_policy()
    secret, study_key = lab_keys(cfg.key_seed)

    study_srv = OracleServer(OracleConfig(study_key, policy, cache=cache)).start_background()
    victim_srv = OracleServer(OracleConfig(secret, policy, cache=_victim_cache(cache))).start_background()
    with study_srv, victim_srv:
        with OracleClient(study_srv.address) as c:
            study_samples = collect(c, cfg.samples, cfg.attack_packet_size, cfg.study_seed, out / "study.bin")
        with OracleClient(victim_srv.address) as c:
            attack_samples = collect(c, cfg.samples, cfg.attack_packet_size, cfg.attack_seed, out / "attack.bin")
            _, zeros = c.query(bytes(cfg.attack_packet_size))

    study = build_profile(study_samples)
    attack = build_profile(attack_samples)
    study.save(out / "study_profile.csv")
    attack.save(out / "attack_profile.csv")
    space = correlate(study, study_key, attack, cfg.alpha)
    (out / "candidates.txt").write_text(f"# key_seed={cfg.key_seed} study_seed={cfg.study_seed} "
                                        f"attack_seed={cfg.attack_seed} alpha={cfg.alpha}\n" + space.to_text())
    outcome = AttackOutcome(secret, study_key, space, study, attack, zeros)
    if outcome.keyspace <= cfg.max_search_keys:
        res = brute_force(space, zeros)
        outcome.found, outcome.trials = res.key, res.trials

    base = average_cycles(secret, PaddingPolicy.none(), cache, cfg.overhead_packets, cfg.packet_size, cfg.overhead_seed)
    prot = average_cycles(secret, policy, cache, cfg.overhead_packets, cfg.packet_size, cfg.overhead_seed)
    report = CountermeasureReport(str(policy), outcome.missing, prot, overhead_multiple(prot, base))

    seeds = f"key_seed={cfg.key_seed} study_seed={cfg.study_seed} attack_seed={cfg.attack_seed} overhead_seed={cfg.overhead_seed}"
    files = emit_report(out, [report], bench, comments=[seeds, f"baseline_avg_cycles={base:.2f}"])
    result = E2EResult(outcome, policy, report)
    summary = out / "summary.txt"
    summary.write_text(_summary(cfg, result))
    result.files = [out / "study.bin", out / "attack.bin", out / "study_profile.csv",
                    out / "attack_profile.csv", out / "candidates.txt", *files, summary]
    return result


def _summary(cfg: ExperimentConfig, r: E2EResult) -> str:
    o = r.outcome
    lines = [
        f"policy = {r.policy}",
        f"samples = {cfg.samples}",
        f"attack_packet_size = {cfg.attack_packet_size}",
        f"overhead_packet_size = {cfg.packet_size}",
        f"key_seed = {cfg.key_seed}",
        f"study_seed = {cfg.study_seed}",
        f"attack_seed = {cfg.attack_seed}",
        f"alpha = {cfg.alpha}",
        f"secret_key = {o.secret_key.hex()}",
        f"keyspace = {o.keyspace}",
        f"log2_keyspace = {np.log2(float(o.keyspace)):.2f}",
        f"missing_bytes = {o.missing}",
        f"searched = {'yes' if o.trials is not None else 'no (above max_search_keys)'}",
        f"trials = {o.trials if o.trials is not None else '-'}",
        f"recovered_key = {o.found.hex() if o.found else 'not-found'}",
        f"s = {r.report.s:.2f}",
        f"efficiency = {r.report.efficiency:.2f}",
        f"outcome = {'pass' if r.success else 'fail'}",
    ]
    return "\n".join(lines) + "\n"
