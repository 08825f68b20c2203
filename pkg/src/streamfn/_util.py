from __future__ import annotations

from typing import Sequence

LATENCY_QUANTILES = (50, 90, 99, 100)


def percentile(values: Sequence[float], q: float) -> float:
    """Linear-interpolated percentile (numpy's default method)."""
    if not values:
        raise ValueError("percentile of empty sequence")
    ordered = sorted(values)
    pos = (len(ordered) - 1) * q / 100.0
    lo = int(pos)
    hi = min(lo + 1, len(ordered) - 1)
    return ordered[lo] + (ordered[hi] - ordered[lo]) * (pos - lo)


def latency_summary_ms(latencies_ns: Sequence[int]) -> dict[str, float | None]:
    keys = [f"p{q}_ms" if q < 100 else "max_ms" for q in LATENCY_QUANTILES]
    if not latencies_ns:
        return dict.fromkeys(keys)
    return {k: percentile(latencies_ns, q) / 1e6 for k, q in zip(keys, LATENCY_QUANTILES)}
