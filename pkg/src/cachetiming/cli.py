"""Command line front end: ``cachetiming <subcommand> ...``."""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from . import analysis
from .analysis import CountermeasureReport, SearchBench, emit_report, extrapolate_search_time, search_bench
from .attack import DEFAULT_ALPHA, CandidateKeySpace, TimingProfile, brute_force, build_profile, collect, correlate
from .attack import keyspace_size, read_dataset
from .cache import ClockSource
from .countermeasure import PaddingPolicy
from .experiment import ExperimentConfig, average_cycles, run_e2e
from .server import OracleClient, OracleConfig, serve

log = logging.getLogger("cachetiming")


class ConfigError(Exception):
    pass


def _hex16(text: str) -> bytes:
    try:
        b = bytes.fromhex(text)
    except ValueError:
        raise ConfigError(f"not hex: {text!r}") from None
    if len(b) != 16:
        raise ConfigError(f"expected 32 hex digits, got {len(text)}")
    return b


def _load_config(args) -> ExperimentConfig:
    cfg = ExperimentConfig()
    if args.config:
        try:
            cfg = ExperimentConfig.from_text(Path(args.config).read_text(), cfg)
        except OSError as e:
            raise ConfigError(str(e)) from e
    for name in ("server", "samples", "packet_size", "policy", "cache", "alpha", "out"):
        v = getattr(args, name, None)
        if v is not None:
            setattr(cfg, name, v)
    return cfg


def cmd_serve(args) -> int:
    cfg = _load_config(args)
    oc = OracleConfig(
        _hex16(args.key_hex),
        cfg.padding_policy(),
        ClockSource(args.mode),
        cfg.cache_config(),
        host=args.host,
        port=args.port,
    )
    serve(oc)
    return 0


def _collect_phase(args, cfg: ExperimentConfig, seed: int) -> int:
    size = args.packet_size or cfg.attack_packet_size
    with OracleClient(cfg.address()) as client:
        samples = collect(client, cfg.samples, size, seed, args.dataset)
    profile = build_profile(samples)
    if args.profile:
        profile.save(args.profile)
    print(f"{len(samples)} samples -> {args.dataset}")
    return 0


def cmd_study(args) -> int:
    cfg = _load_config(args)
    return _collect_phase(args, cfg, args.seed if args.seed is not None else cfg.study_seed)


def cmd_attack(args) -> int:
    cfg = _load_config(args)
    return _collect_phase(args, cfg, args.seed if args.seed is not None else cfg.attack_seed)


def _profile(path: str) -> TimingProfile:
    if path.endswith(".csv"):
        return TimingProfile.load(path)
    samples, _ = read_dataset(path)
    return build_profile(samples)


def cmd_correlate(args) -> int:
    cfg = _load_config(args)
    space = correlate(_profile(args.study), _hex16(args.study_key), _profile(args.attack), cfg.alpha)
    text = space.to_text()
    if args.output:
        Path(args.output).write_text(text)
    else:
        sys.stdout.write(text)
    print(f"keyspace {keyspace_size(space)}", file=sys.stderr)
    return 0


def cmd_search(args) -> int:
    space = CandidateKeySpace.load(args.candidates)
    res = brute_force(space, _hex16(args.zeros))
    if res.found:
        print(f"found {res.key.hex()} after {res.trials} trials")
        return 0
    print(f"not-found after {res.trials} trials")
    return 1


def cmd_bench(args) -> int:
    bench = search_bench([int(float(s)) for s in args.sizes])
    for n, t in bench.rows:
        print(f"{n:>12d} keys  {t:10.4f} s")
    print(f"rate {bench.seconds_per_key:.3e} s/key")
    for label, ks in (("2^128", 2**128),):
        sec, yrs = extrapolate_search_time(ks, bench)
        print(f"{label}: {sec:.3e} s = {yrs:.3e} years")
    if args.out:
        emit_report(args.out, bench=bench)
    return 0


def _read_bench(path: str) -> SearchBench:
    rows = []
    for line in Path(path).read_text().splitlines():
        if line.startswith("#") or line.startswith("keyspace") or not line.strip():
            continue
        n, t = line.split(",")
        rows.append((int(n), float(t)))
    return SearchBench(rows)


def cmd_report(args) -> int:
    cfg = _load_config(args)
    space = CandidateKeySpace.load(args.candidates)
    key = _hex16(args.true_key)
    policy = cfg.padding_policy()
    cache = cfg.cache_config()
    base = average_cycles(key, PaddingPolicy.none(), cache, args.packets, cfg.packet_size, cfg.overhead_seed)
    prot = average_cycles(key, policy, cache, args.packets, cfg.packet_size, cfg.overhead_seed)
    rep = CountermeasureReport(str(policy), analysis.missing_bytes(space, key), prot, prot / base)
    bench = _read_bench(args.bench) if args.bench else None
    emit_report(cfg.out, [rep], bench, comments=[f"overhead_seed={cfg.overhead_seed}"])
    print(",".join(analysis.TABLE2_HEADER))
    print(",".join(rep.row()))
    if bench:
        sec, yrs = extrapolate_search_time(keyspace_size(space), bench)
        print(f"search time for {keyspace_size(space):.3e} keys: {sec:.3e} s = {yrs:.3e} years")
    return 0


def cmd_e2e(args) -> int:
    cfg = _load_config(args)
    if args.seed is not None:
        cfg.key_seed, cfg.study_seed, cfg.attack_seed, cfg.overhead_seed = (args.seed + i for i in range(4))
    if args.attack_packet_size:
        cfg.attack_packet_size = args.attack_packet_size
    cfg.validate()
    r = run_e2e(cfg)
    sys.stdout.write((Path(cfg.out) / "summary.txt").read_text())
    return 0 if r.success else 1


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="cachetiming", description=__doc__)
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, *names):
        sp.add_argument("--config", help="key = value file overriding defaults")
        if "server" in names:
            sp.add_argument("--server", help="host:port of the timing oracle")
        if "samples" in names:
            sp.add_argument("--samples", type=int)
        if "packet" in names:
            sp.add_argument("--packet-size", type=int)
        if "policy" in names:
            sp.add_argument("--policy", help="none | fixed:<target> | avg")
        if "cache" in names:
            sp.add_argument("--cache", help="cache model file (key = value)")
        if "alpha" in names:
            sp.add_argument("--alpha", type=float, help=f"candidate cut in std devs (default {DEFAULT_ALPHA})")
        if "out" in names:
            sp.add_argument("--out", help="output directory")
        return sp

    sp = common(sub.add_parser("serve", help="run the timing oracle"), "policy", "cache")
    sp.add_argument("--key-hex", required=True)
    sp.add_argument("--host", default="127.0.0.1")
    sp.add_argument("--port", type=int, default=9000)
    sp.add_argument("--mode", choices=["sim", "hw"], default="sim")
    sp.set_defaults(func=cmd_serve)

    for name, func in (("study", cmd_study), ("attack", cmd_attack)):
        sp = common(sub.add_parser(name, help=f"collect the {name} dataset"), "server", "samples", "packet")
        sp.add_argument("--seed", type=int)
        sp.add_argument("--dataset", required=True, help="binary dataset output")
        sp.add_argument("--profile", help="profile CSV output")
        sp.set_defaults(func=func)

    sp = common(sub.add_parser("correlate", help="rank key bytes"), "alpha")
    sp.add_argument("--study", required=True, help="study profile CSV or dataset")
    sp.add_argument("--study-key", required=True)
    sp.add_argument("--attack", required=True, help="attack profile CSV or dataset")
    sp.add_argument("-o", "--output", help="candidate file (default stdout)")
    sp.set_defaults(func=cmd_correlate)

    sp = sub.add_parser("search", help="brute-force a candidate space")
    sp.add_argument("--candidates", required=True)
    sp.add_argument("--zeros", required=True, help="scrambled zeros, 32 hex digits")
    sp.set_defaults(func=cmd_search)

    sp = sub.add_parser("bench", help="time key search over growing spaces")
    sp.add_argument("--sizes", nargs="+", default=[str(n) for n in analysis.DEFAULT_BENCH_SIZES])
    sp.add_argument("--out")
    sp.set_defaults(func=cmd_bench)

    sp = common(sub.add_parser("report", help="Table I/II style report files"), "policy", "cache", "out", "packet")
    sp.add_argument("--candidates", required=True)
    sp.add_argument("--true-key", required=True)
    sp.add_argument("--packets", type=int, default=200)
    sp.add_argument("--bench", help="table1.csv from a previous bench run")
    sp.set_defaults(func=cmd_report)

    sp = common(sub.add_parser("e2e", help="full loop against in-process servers"),
                "samples", "policy", "cache", "alpha", "out", "packet")
    sp.add_argument("--seed", type=int)
    sp.add_argument("--attack-packet-size", type=int)
    sp.set_defaults(func=cmd_e2e)
    return p


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (ConfigError, ValueError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 2
    except (ConnectionError, OSError) as e:
        print(f"failed: {e}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
