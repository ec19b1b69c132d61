"""Constant-encryption-time padding applied to per-round cycle counts.

Two policies equalise each round's cost after it has been measured:

* ``fixed:<target>`` pads every round up to a fixed cycle budget;
* ``avg`` pads every round up to the running mean of the rounds measured
  so far in the same encryption (integer mean, raw costs only).

A round already above its bound is left as is, like a delay loop whose
bound is negative.
"""

from __future__ import annotations

import time
from dataclasses import dataclass

DEFAULT_FIXED_TARGET = 250


@dataclass(frozen=True)
class PaddingPolicy:
    kind: str = "none"
    target_cycles: int | None = None

    def __post_init__(self):
        if self.kind not in ("none", "fixed", "avg"):
            raise ValueError(f"unknown policy kind {self.kind!r}")
        if self.kind == "fixed" and (self.target_cycles is None or self.target_cycles <= 0):
            raise ValueError("fixed policy needs a positive target")

    @classmethod
    def none(cls) -> "PaddingPolicy":
        return cls("none")

    @classmethod
    def fixed(cls, target: int = DEFAULT_FIXED_TARGET) -> "PaddingPolicy":
        return cls("fixed", int(target))

    @classmethod
    def running_average(cls) -> "PaddingPolicy":
        return cls("avg")

    @classmethod
    def parse(cls, text: str) -> "PaddingPolicy":
        """Parse ``none``, ``avg`` or ``fixed:<target>`` (bare ``fixed`` means 250)."""
        text = text.strip().lower()
        if text == "none":
            return cls.none()
        if text in ("avg", "average", "running_average"):
            return cls.running_average()
        if text == "fixed":
            return cls.fixed()
        if text.startswith("fixed:"):
            try:
                return cls.fixed(int(text[6:]))
            except ValueError:
                raise ValueError(f"bad fixed target in {text!r}") from None
        raise ValueError(f"unknown policy {text!r}")

    def __str__(self) -> str:
        return f"fixed:{self.target_cycles}" if self.kind == "fixed" else self.kind


@dataclass
class PaddedRounds:
    raw: list[int]
    pad: list[int]

    @property
    def padded(self) -> list[int]:
        return [r + p for r, p in zip(self.raw, self.pad)]

    @property
    def total(self) -> int:
        return sum(self.raw) + sum(self.pad)


def pad_fixed(rounds: list[int], target: int) -> PaddedRounds:
    if target <= 0:
        raise ValueError("target must be positive")
    return PaddedRounds(list(rounds), [max(0, target - c) for c in rounds])


def pad_running_average(rounds: list[int]) -> PaddedRounds:
    if not rounds:
        raise ValueError("need at least one round")
    pads = []
    total = 0
    for i, c in enumerate(rounds):
        total += c
        pads.append(max(0, total // (i + 1) - c))
    return PaddedRounds(list(rounds), pads)


def apply_policy(rounds: list[int], policy: PaddingPolicy) -> PaddedRounds:
    if policy.kind == "fixed":
        return pad_fixed(rounds, policy.target_cycles)
    if policy.kind == "avg":
        return pad_running_average(rounds)
    return PaddedRounds(list(rounds), [0] * len(rounds))


def packet_cycles(block_rounds: list[list[int]], policy: PaddingPolicy) -> int:
    """Total padded cycles of a packet; padding restarts with every block."""
    return sum(apply_policy(r, policy).total for r in block_rounds)


class RoundPadder:
    """Busy-wait padding for the hardware clock.

    Called between rounds of a real encryption: measures the round just
    finished with the monotonic counter and spins until the policy's bound
    is reached.  Units are nanoseconds, standing in for cycles.
    """

    def __init__(self, policy: PaddingPolicy, clock=time.perf_counter_ns):
        self.policy = policy
        self.clock = clock
        self.raw: list[int] = []
        self._sum = 0
        self._mark = 0
        self.loops_per_ns = calibrate_spin(clock)

    def start(self) -> None:
        self.raw.clear()
        self._sum = 0
        self._mark = self.clock()

    def __call__(self, r: int) -> None:
        now = self.clock()
        raw = now - self._mark
        self.raw.append(raw)
        self._sum += raw
        if self.policy.kind == "fixed":
            bound = self.policy.target_cycles
        elif self.policy.kind == "avg":
            bound = self._sum // len(self.raw)
        else:
            bound = 0
        if bound > raw:
            spin(int((bound - raw) * self.loops_per_ns))
        self._mark = self.clock()


def spin(n: int) -> None:
    for _ in range(n):
        pass


def calibrate_spin(clock=time.perf_counter_ns, n: int = 200_000) -> float:
    """Approximate empty-loop iterations per clock unit on this machine."""
    t0 = clock()
    spin(n)
    dt = max(1, clock() - t0)
    return n / dt
