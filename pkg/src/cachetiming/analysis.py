"""Countermeasure scoring, key-search benchmarks and report files."""

from __future__ import annotations

import csv
import math
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

from .aes import scrambled_zeros
from .attack import CandidateKeySpace, missing_positions
from .bruteforce import search

SECONDS_PER_YEAR = 3.156e7
DEFAULT_BENCH_SIZES = (10**4, 10**5, 10**6, 10**7, 10**8)

TABLE1_HEADER = ["keyspace", "seconds"]
TABLE2_HEADER = ["policy", "m", "avg_cycles", "s", "efficiency"]
PLOT_HEADER = ["log10_keyspace", "log10_seconds"]


def missing_bytes(cs: CandidateKeySpace, true_key: bytes) -> int:
    return len(missing_positions(cs, true_key))


def overhead_multiple(protected_avg: float, baseline_avg: float) -> float:
    if baseline_avg <= 0:
        raise ValueError("baseline must be positive")
    return protected_avg / baseline_avg


def efficiency(m: int, s: float) -> float:
    """Missing key bytes per unit of slowdown."""
    if s <= 0:
        raise ValueError("s must be positive")
    return m / s


@dataclass
class CountermeasureReport:
    policy: str
    m: int
    avg_cycles: float
    s: float

    @property
    def efficiency(self) -> float:
        return efficiency(self.m, self.s)

    def row(self) -> list[str]:
        return [self.policy, str(self.m), f"{self.avg_cycles:.2f}", f"{self.s:.2f}", f"{self.efficiency:.2f}"]


@dataclass
class SearchBench:
    rows: list[tuple[int, float]] = field(default_factory=list)
    workers: int = 1

    @property
    def seconds_per_key(self) -> float:
        """Least-squares slope of time against key-space size, through the origin."""
        num = sum(n * t for n, t in self.rows)
        den = sum(n * n for n, _ in self.rows)
        if den == 0 or num <= 0:
            raise ValueError("bench has no usable rows")
        return num / den

    def predict(self, keyspace: int) -> float:
        return keyspace * self.seconds_per_key

    def residuals(self) -> list[float]:
        """Relative misfit of each measured row."""
        rate = self.seconds_per_key
        return [abs(t - n * rate) / t for n, t in self.rows]


def synthetic_space(size: int) -> tuple[CandidateKeySpace, bytes]:
    """A candidate space of exactly ``size`` keys with the true key enumerated last."""
    if size < 1:
        raise ValueError("size must be >= 1")
    # the varying positions turn fastest, so the search vectorises over them
    radices = [1] * 16 + _radices(size)
    radices = radices[-16:]
    key = bytes(range(0x10, 0x20))
    cands = []
    for j in range(16):
        r = radices[j]
        decoys = [(key[j] + 1 + i) % 256 for i in range(r - 1)]
        cands.append(decoys + [key[j]])
    return CandidateKeySpace(cands), key


def _radices(size: int) -> list[int]:
    # pack prime factors into per-position radices of at most 256
    factors = []
    n, p = size, 2
    while p * p <= n:
        while n % p == 0:
            factors.append(p)
            n //= p
        p += 1
    if n > 1:
        factors.append(n)
    if any(f > 256 for f in factors):
        raise ValueError(f"{size} has a prime factor above 256")
    radices: list[int] = []
    for f in sorted(factors, reverse=True):
        for i, r in enumerate(radices):
            if r * f <= 256:
                radices[i] = r * f
                break
        else:
            radices.append(f)
    if len(radices) > 16:
        raise ValueError(f"{size} does not fit in 16 key positions")
    return sorted(radices)


def time_search(size: int, repeats: int = 1) -> float:
    """Best-of-``repeats`` seconds to exhaust a worst-case space of ``size`` keys."""
    cs, key = synthetic_space(size)
    zeros = scrambled_zeros(key)
    best = math.inf
    for _ in range(repeats):
        t0 = time.perf_counter()
        found, trials = search(cs.candidates, zeros)
        best = min(best, time.perf_counter() - t0)
        if found != key or trials != size:
            raise RuntimeError(f"search of {size} keys went wrong ({trials} trials)")
    return best


def search_bench(sizes: Sequence[int] = DEFAULT_BENCH_SIZES, repeats: int = 3) -> SearchBench:
    time_search(1000)  # warm-up
    rows = []
    for n in sorted(sizes):
        # big spaces are long enough to time once
        rows.append((n, time_search(n, repeats if n <= 10**6 else 1)))
    return SearchBench(rows)


def extrapolate_search_time(keyspace: int, bench: SearchBench | float) -> tuple[float, float]:
    """Return ``(seconds, years)`` to exhaust ``keyspace`` at the bench rate."""
    rate = bench if isinstance(bench, (int, float)) else bench.seconds_per_key
    seconds = keyspace * rate
    return seconds, seconds / SECONDS_PER_YEAR


def _write_csv(path: Path, header: list[str], rows: list[list[str]], comments: Sequence[str] = ()) -> None:
    with open(path, "w", newline="") as f:
        for c in comments:
            f.write(f"# {c}\n")
        w = csv.writer(f, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)


def emit_report(
    out_dir: str | Path,
    countermeasures: Sequence[CountermeasureReport] = (),
    bench: SearchBench | None = None,
    comments: Sequence[str] = (),
) -> list[Path]:
    """Write table1.csv (search times), table2.csv (countermeasures) and plot_data.csv."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    rows1 = [[str(n), f"{t:.6g}"] for n, t in (bench.rows if bench else [])]
    plot = [[f"{math.log10(n):.4f}", f"{math.log10(t):.4f}"] for n, t in (bench.rows if bench else []) if t > 0]
    extra = list(comments)
    if bench is not None:
        extra.append(f"workers={bench.workers}")
    paths = [out / "table1.csv", out / "table2.csv", out / "plot_data.csv"]
    _write_csv(paths[0], TABLE1_HEADER, rows1, extra)
    _write_csv(paths[1], TABLE2_HEADER, [r.row() for r in countermeasures], comments)
    _write_csv(paths[2], PLOT_HEADER, plot, extra)
    return paths
