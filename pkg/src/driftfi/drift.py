"""Distribution-shift detection between consecutive training batches.

Each feature contributes the sup-distance between its empirical CDFs in
the previous and current batch; the running sum of those distances is
compared against a threshold, stopping early once it is exceeded.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import InsufficientDataError, SchemaMismatchError
from .forest import Instance


@dataclass
class DriftReport:
    """Outcome of comparing one batch pair.

    ``per_feature`` holds the statistics actually evaluated (early exit
    may leave later features out); ``accumulated`` is their sum.
    """

    per_feature: dict[str, float]
    accumulated: float
    threshold: float
    drift_detected: bool
    batch_pair: tuple[int, int]
    early_exit: bool = False

    def as_dict(self) -> dict:
        return {
            "per_feature": dict(self.per_feature),
            "accumulated": self.accumulated,
            "threshold": self.threshold,
            "drift_detected": self.drift_detected,
            "batch_pair": list(self.batch_pair),
            "early_exit": self.early_exit,
        }


def ks_statistic(prev: Sequence[float], curr: Sequence[float]) -> float:
    """Two-sample Kolmogorov-Smirnov statistic.

    Exact supremum of |ECDF(curr) - ECDF(prev)| over the pooled sample
    points (the supremum over the whole line is attained there).
    """
    a = np.sort(np.asarray(prev, dtype=float))
    b = np.sort(np.asarray(curr, dtype=float))
    if a.size == 0 or b.size == 0:
        raise InsufficientDataError("both samples must be non-empty")
    if not (np.isfinite(a).all() and np.isfinite(b).all()):
        raise InsufficientDataError("samples must contain finite values only")
    pooled = np.concatenate([a, b])
    cdf_a = np.searchsorted(a, pooled, side="right") / a.size
    cdf_b = np.searchsorted(b, pooled, side="right") / b.size
    return float(np.abs(cdf_a - cdf_b).max())


def _column(batch: Sequence[Instance], feature: str) -> list[float]:
    try:
        return [inst.features[feature] for inst in batch]
    except KeyError:
        raise SchemaMismatchError(
            f"feature {feature!r} missing from an instance in the batch"
        ) from None


def detect(
    prev_batch: Sequence[Instance],
    curr_batch: Sequence[Instance],
    active_features: Sequence[str],
    threshold: float,
    batch_pair: tuple[int, int] = (0, 1),
    early_exit: bool = True,
) -> DriftReport:
    """Accumulate per-feature KS statistics in schema order and flag
    drift once the sum exceeds the threshold.

    With ``early_exit`` the scan stops at the first feature that pushes
    the sum over the threshold; the decision is unaffected because the
    sum only grows.
    """
    if threshold < 0:
        raise ValueError("threshold must be non-negative")
    per_feature: dict[str, float] = {}
    accumulated = 0.0
    hit = False
    for feature in active_features:
        d = ks_statistic(_column(prev_batch, feature), _column(curr_batch, feature))
        per_feature[feature] = d
        accumulated += d
        if accumulated > threshold:
            hit = True
            if early_exit:
                break
    evaluated_all = len(per_feature) == len(active_features)
    return DriftReport(
        per_feature=per_feature,
        accumulated=accumulated,
        threshold=threshold,
        drift_detected=hit,
        batch_pair=tuple(batch_pair),
        early_exit=not evaluated_all,
    )
