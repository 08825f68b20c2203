"""Cold-start penalty and processing overhead."""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction

NS = 1_000_000_000


class MetricError(ValueError):
    pass


class UndefinedMetricError(MetricError):
    """t2 == t0: the run has zero length."""


class InvalidTimestampsError(MetricError):
    """The timestamps violate t0 <= t1 <= t2."""


@dataclass(frozen=True)
class RunTimestamps:
    """Instants in integer nanoseconds on one clock.

    t0: first frame created; t1: processing system receives the first frame;
    t2: last frame processed.
    """

    t0: int
    t1: int
    t2: int

    @classmethod
    def from_seconds(cls, t0: float, t1: float, t2: float) -> "RunTimestamps":
        return cls(round(t0 * NS), round(t1 * NS), round(t2 * NS))

    def check(self) -> None:
        if not self.t0 <= self.t1 <= self.t2:
            raise InvalidTimestampsError(f"expected t0 <= t1 <= t2, got {self.t0}, {self.t1}, {self.t2}")
        if self.t2 == self.t0:
            raise UndefinedMetricError("t2 == t0")

    @property
    def total_s(self) -> float:
        return (self.t2 - self.t0) / NS


def compute_theta(ts: RunTimestamps) -> float:
    """Share of the run spent before the first frame was received."""
    ts.check()
    return (ts.t1 - ts.t0) / (ts.t2 - ts.t0)


def compute_overhead(ts: RunTimestamps, stream_seconds: float) -> float:
    """Seconds by which the run exceeds the stream's own generation time."""
    ts.check()
    # exact difference, rounded once; a plain float subtraction loses the
    # small overheads we care about to cancellation
    return float(Fraction(ts.t2 - ts.t0, NS) - Fraction(stream_seconds))
