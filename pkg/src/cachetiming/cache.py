"""Cycle-count model for the AES table lookups.

Each table line is either resident (a lookup costs ``hit_cycles``) or not
(``miss_cycles``, after which the line is resident).  A round costs
``base_round_cycles`` plus its 16 lookups, plus optional seeded gaussian
noise.  Residency persists across the rounds and blocks of one packet.

At the start of every packet the cache holds whatever the server's other
activity left behind: a fixed subset of each table's lines, chosen once
per ``layout_seed``, is evicted.  ``evicted_fraction=1.0`` (the default)
is a completely cold cache.
"""

from __future__ import annotations

import enum
import time
from dataclasses import dataclass, fields, replace
from pathlib import Path

import numpy as np

from .aes import ROUNDS, LookupTrace

TABLE_BYTES = (1024, 1024, 1024, 1024, 256)
ENTRY_BYTES = (4, 4, 4, 4, 1)
LOOKUPS_PER_ROUND = 16


@dataclass(frozen=True)
class CacheConfig:
    line_size_bytes: int = 64
    hit_cycles: int = 3
    miss_cycles: int = 40
    base_round_cycles: int = 50
    noise_stddev_cycles: float = 0.0
    rng_seed: int = 0
    evicted_fraction: float = 1.0
    layout_seed: int = 0

    def __post_init__(self):
        ls = self.line_size_bytes
        if ls <= 0 or any(t % ls for t in TABLE_BYTES) or ls < max(ENTRY_BYTES):
            raise ValueError(f"line_size_bytes={ls} must divide every table size")
        if min(self.hit_cycles, self.miss_cycles, self.base_round_cycles) < 0:
            raise ValueError("cycle costs must be non-negative")
        if self.miss_cycles < self.hit_cycles:
            raise ValueError("miss_cycles must be >= hit_cycles")
        if self.noise_stddev_cycles < 0:
            raise ValueError("noise_stddev_cycles must be non-negative")
        if not 0.0 <= self.evicted_fraction <= 1.0:
            raise ValueError("evicted_fraction must be in [0, 1]")

    def lines_per_table(self, table_id: int) -> int:
        return TABLE_BYTES[table_id] // self.line_size_bytes

    def worst_round_cycles(self) -> int:
        """Largest noise-free round cost: every lookup a miss."""
        return self.base_round_cycles + LOOKUPS_PER_ROUND * self.miss_cycles

    def to_text(self) -> str:
        return "".join(f"{f.name} = {getattr(self, f.name)}\n" for f in fields(self))

    @classmethod
    def from_text(cls, text: str) -> "CacheConfig":
        types = {f.name: f.type for f in fields(cls)}
        kw = {}
        for lineno, line in enumerate(text.splitlines(), 1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ValueError(f"line {lineno}: expected key = value")
            k, v = (s.strip() for s in line.split("=", 1))
            if k not in types:
                raise ValueError(f"line {lineno}: unknown cache key {k!r}")
            kw[k] = float(v) if types[k] == "float" else int(v)
        return cls(**kw)

    @classmethod
    def load(cls, path: str | Path) -> "CacheConfig":
        return cls.from_text(Path(path).read_text())

    def save(self, path: str | Path) -> None:
        Path(path).write_text(self.to_text())


# A warm server whose network stack evicts one line in sixteen between
# packets.  Lines are one T-table entry wide so the timing resolves whole
# byte values, like the sub-line effects seen on real targets.
LAB_CACHE = CacheConfig(line_size_bytes=4, evicted_fraction=1 / 16, layout_seed=2014)


class CacheState:
    """Resident line indices, one set per table."""

    def __init__(self, resident: list[set[int]] | None = None):
        self.resident = resident if resident is not None else [set() for _ in TABLE_BYTES]

    def copy(self) -> "CacheState":
        return CacheState([set(s) for s in self.resident])

    def __eq__(self, other):
        return isinstance(other, CacheState) and self.resident == other.resident

    def __repr__(self):
        return f"CacheState({[len(s) for s in self.resident]} lines)"


def reset_cache(state: CacheState | None = None) -> CacheState:
    if state is None:
        return CacheState()
    for s in state.resident:
        s.clear()
    return state


def evicted_lines(config: CacheConfig) -> list[frozenset[int]]:
    """Lines missing at packet start, per table (fixed by ``layout_seed``)."""
    return _evicted(config.line_size_bytes, config.evicted_fraction, config.layout_seed)


_EVICTED_CACHE: dict = {}


def _evicted(line_size, fraction, seed):
    k = (line_size, fraction, seed)
    if k not in _EVICTED_CACHE:
        rng = np.random.default_rng(seed)
        out = []
        for t in range(len(TABLE_BYTES)):
            n = TABLE_BYTES[t] // line_size
            count = int(round(fraction * n))
            out.append(frozenset(int(i) for i in rng.choice(n, size=count, replace=False)))
        _EVICTED_CACHE[k] = out
    return _EVICTED_CACHE[k]


def initial_state(config: CacheConfig) -> CacheState:
    """Residency seen by the first lookup of a packet."""
    gone = evicted_lines(config)
    return CacheState([
        set(range(config.lines_per_table(t))) - gone[t] for t in range(len(TABLE_BYTES))
    ])


def line_of(table_id: int, index: int, config: CacheConfig) -> int:
    return index * ENTRY_BYTES[table_id] // config.line_size_bytes


def charge_access(state: CacheState, table_id: int, index: int, config: CacheConfig) -> tuple[CacheState, int]:
    if not 0 <= index < 256:
        raise ValueError(f"index {index} out of range")
    line = index * ENTRY_BYTES[table_id] // config.line_size_bytes
    lines = state.resident[table_id]
    if line in lines:
        return state, config.hit_cycles
    lines.add(line)
    return state, config.miss_cycles


def simulate_encryption(
    trace: LookupTrace,
    config: CacheConfig,
    rng: np.random.Generator | None = None,
    state: CacheState | None = None,
) -> list[list[int]]:
    """Per-block, per-round cycle counts for a packet's lookup trace.

    Noise draws come from ``rng`` (a fresh generator seeded with
    ``config.rng_seed`` when omitted); nothing is drawn when the noise
    level is zero.
    """
    if state is None:
        state = initial_state(config)
    resident = state.resident
    ls = config.line_size_bytes
    hit, miss, base = config.hit_cycles, config.miss_cycles, config.base_round_cycles
    sd = config.noise_stddev_cycles
    if sd > 0 and rng is None:
        rng = np.random.default_rng(config.rng_seed)

    per_block = LOOKUPS_PER_ROUND * ROUNDS
    acc = trace.accesses
    if len(acc) % per_block:
        raise ValueError(f"trace length {len(acc)} is not a whole number of blocks")
    out = []
    for b0 in range(0, len(acc), per_block):
        rounds = [base] * ROUNDS
        for table_id, index, r in acc[b0:b0 + per_block]:
            if not 0 <= r < ROUNDS:
                raise ValueError(f"round {r} out of range")
            line = index * ENTRY_BYTES[table_id] // ls
            lines = resident[table_id]
            if line in lines:
                rounds[r] += hit
            else:
                lines.add(line)
                rounds[r] += miss
        if sd > 0:
            noise = rng.normal(0.0, sd, ROUNDS)
            rounds = [max(0, c + int(round(z))) for c, z in zip(rounds, noise)]
        out.append(rounds)
    return out


class ClockSource(enum.Enum):
    SIMULATED = "sim"
    HARDWARE = "hw"


def read_cycle_counter() -> int:
    """Monotonic timestamp used as the cycle counter in hardware mode (ns)."""
    return time.perf_counter_ns()


def with_noise(config: CacheConfig, stddev: float, seed: int | None = None) -> CacheConfig:
    return replace(config, noise_stddev_cycles=stddev, rng_seed=config.rng_seed if seed is None else seed)

