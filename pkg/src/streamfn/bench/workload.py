"""Fixed-rate frame load generator."""

from __future__ import annotations

import logging
import random
import time
from dataclasses import dataclass, field
from typing import Callable, Optional

from ..events import Event

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class WorkloadSpec:
    fps: float = 10.0
    width: int = 160
    height: int = 120
    distinct_frames: int = 20
    duration_s: float = 10.0
    rng_seed: int = 0

    def __post_init__(self) -> None:
        if self.fps <= 0:
            raise ValueError("fps must be > 0")
        if self.distinct_frames < 1:
            raise ValueError("distinct_frames must be >= 1")
        if self.width < 1 or self.height < 1:
            raise ValueError("frame dimensions must be positive")
        if self.duration_s <= 0:
            raise ValueError("duration must be > 0")

    @property
    def frame_size(self) -> int:
        return self.width * self.height * 3

    @property
    def n_frames(self) -> int:
        return max(1, round(self.fps * self.duration_s))

    @property
    def interval_s(self) -> float:
        return 1.0 / self.fps

    @property
    def generation_s(self) -> float:
        """Time from creating the first frame to creating the last one."""
        return (self.n_frames - 1) / self.fps

    def frame_pool(self) -> list[bytes]:
        """``distinct_frames`` random RGB frames, reproducible from the seed."""
        if self.distinct_frames > 256 ** min(self.frame_size, 8):
            raise ValueError(f"cannot draw {self.distinct_frames} distinct {self.width}x{self.height} frames")
        rng = random.Random(self.rng_seed)
        pool: list[bytes] = []
        seen: set[bytes] = set()
        attempts = 0
        while len(pool) < self.distinct_frames:
            frame = rng.randbytes(self.frame_size)
            attempts += 1
            if frame in seen:
                if attempts > 100 * self.distinct_frames:
                    raise ValueError(
                        f"cannot draw {self.distinct_frames} distinct {self.width}x{self.height} frames"
                    )
                continue
            seen.add(frame)
            pool.append(frame)
        return pool


@dataclass
class GenerationLog:
    t0_ns: int = 0
    send_ns: list[int] = field(default_factory=list)
    # actual minus scheduled start of each send, seconds
    drift_s: list[float] = field(default_factory=list)
    late_frames: int = 0

    @property
    def frames_sent(self) -> int:
        return len(self.send_ns)

    @property
    def max_drift_s(self) -> float:
        return max(self.drift_s, default=0.0)


def generate_stream(
    spec: WorkloadSpec,
    sink: Callable[[Event], object],
    pool: Optional[list[bytes]] = None,
) -> GenerationLog:
    """Emit ``spec.n_frames`` frames at ``1/fps`` spacing into ``sink``.

    Frame ``i`` carries ``pool[i % len(pool)]`` plus ``ts`` (creation instant,
    ns since the epoch) and ``seq`` headers. ``t0`` is frame 0's creation.
    A sink that stalls past the next slot is logged as pacing drift; later
    frames keep their original schedule, so lost time is made up.
    """
    if pool is None:
        pool = spec.frame_pool()
    out = GenerationLog()
    interval = spec.interval_s
    start = time.monotonic()
    for i in range(spec.n_frames):
        target = start + i * interval
        while (remaining := target - time.monotonic()) > 0:
            time.sleep(remaining)
        created = time.time_ns()
        if i == 0:
            out.t0_ns = created
        out.drift_s.append(time.monotonic() - target)
        sink(Event({"ts": str(created).encode(), "seq": str(i).encode()}, pool[i % len(pool)]))
        out.send_ns.append(created)
        overrun = time.monotonic() - (target + interval)
        if overrun > 0:
            out.late_frames += 1
            log.warning("frame %d: sink held the generator %.1f ms past the next slot", i, overrun * 1e3)
    return out
