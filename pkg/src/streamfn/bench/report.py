"""CSV output for benchmark runs."""

from __future__ import annotations

import csv
from pathlib import Path
from typing import Iterable

from .modes import BenchReport

COLUMNS = ["mode", "duration_s", "t0_ns", "t1_ns", "t2_ns", "theta", "overhead_s", "frames"]
LATENCY_COLUMNS = ["mode", "duration_s", "frames", "p50_ms", "p90_ms", "p99_ms", "max_ms", "max_drift_ms", "late_frames"]


def latency_path(path: str | Path) -> Path:
    path = Path(path)
    return path.with_name(path.stem + ".latency.csv")


def write_report(reports: Iterable[BenchReport], path: str | Path) -> Path:
    """Write one row per run, plus a latency-percentile sidecar next to it."""
    reports = list(reports)
    path = Path(path)
    with path.open("w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=COLUMNS)
        writer.writeheader()
        for rep in reports:
            row = rep.row()
            row["theta"] = repr(row["theta"])
            row["overhead_s"] = repr(row["overhead_s"])
            writer.writerow(row)
    side = latency_path(path)
    with side.open("w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=LATENCY_COLUMNS)
        writer.writeheader()
        for rep in reports:
            lat = rep.latency
            writer.writerow(
                {
                    "mode": rep.mode,
                    "duration_s": rep.workload.duration_s,
                    "frames": rep.frames_processed,
                    "p50_ms": lat.get("p50_ms"),
                    "p90_ms": lat.get("p90_ms"),
                    "p99_ms": lat.get("p99_ms"),
                    "max_ms": lat.get("max_ms"),
                    "max_drift_ms": rep.max_drift_s * 1e3,
                    "late_frames": rep.late_frames,
                }
            )
    return path


def read_report(path: str | Path) -> list[dict]:
    with Path(path).open(newline="") as fh:
        rows = list(csv.DictReader(fh))
    for row in rows:
        for key in ("t0_ns", "t1_ns", "t2_ns", "frames"):
            row[key] = int(row[key])
        for key in ("duration_s", "theta", "overhead_s"):
            row[key] = float(row[key])
    return rows
