"""Small exact statistics: empirical CDFs, Tukey quartiles, correlation."""

from __future__ import annotations

import statistics
from collections import Counter
from typing import Iterable, Sequence


class UndefinedCorrelationError(ValueError):
    pass


def ecdf(values: Iterable[float] | Counter) -> list[tuple[float, float]]:
    """Step points ``(x, P[X <= x])`` at each distinct value, ending at 1."""
    counts = values if isinstance(values, Counter) else Counter(values)
    total = sum(counts.values())
    points = []
    running = 0
    for x in sorted(counts):
        running += counts[x]
        points.append((x, running / total))
    return points


def ecdf_at(points: Sequence[tuple[float, float]], x: float) -> float:
    prob = 0.0
    for value, p in points:
        if value > x:
            break
        prob = p
    return prob


def quantile(values: Sequence[float], q: float) -> float:
    """Inverse empirical CDF: smallest value v with P[X <= v] >= q."""
    ordered = sorted(values)
    if not ordered:
        raise ValueError("quantile of empty sequence")
    n = len(ordered)
    for i, v in enumerate(ordered, start=1):
        if i >= q * n - 1e-12:
            return v
    return ordered[-1]


def tukey_summary(values: Sequence[float]) -> dict[str, float]:
    """min, Q1, median, Q3, max with median-exclusive (Tukey) hinges."""
    ordered = sorted(values)
    n = len(ordered)
    if n == 0:
        raise ValueError("summary of empty sequence")
    half = n // 2
    lower = ordered[:half] or ordered
    upper = ordered[half + (n % 2):] or ordered
    return {
        "min": ordered[0],
        "q1": statistics.median(lower),
        "median": statistics.median(ordered),
        "q3": statistics.median(upper),
        "max": ordered[-1],
    }


def pearson(x: Sequence[float], y: Sequence[float]) -> float:
    if len(x) != len(y):
        raise ValueError("series differ in length")
    if len(x) < 2:
        raise UndefinedCorrelationError("need at least two points")
    try:
        r = statistics.correlation(x, y)
    except statistics.StatisticsError as exc:
        raise UndefinedCorrelationError(str(exc)) from exc
    return max(-1.0, min(1.0, r))
