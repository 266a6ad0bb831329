"""The two per-instance feature-importance engines.

``shapley``/``shap_importance`` attribute a prediction by exact
coalition enumeration over the active features: the model output with a
feature subset "included" is the mean vote share over a background
sample in which excluded features take the background row's values.
``mdi_importance`` instead walks the instance's decision path in every
tree and credits each split node's Gini decrease to its split feature.
Both return normalized non-negative score vectors so they can be
compared directly.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

from .errors import FeatureBudgetError, InsufficientDataError, UndefinedImpurityError
from .forest import ArfEnsemble, Instance, NodeStats, gini_from_counts, _Node

MAX_EXACT_FEATURES = 16


@dataclass
class ImportanceVector:
    """Normalized per-feature attribution with its provenance.

    ``scores`` sum to 1 unless every raw score was zero, in which case
    ``degenerate`` is set and the scores stay all-zero.
    """

    scores: dict[str, float]
    method: str  # "SHAP" | "MDI"
    drift_flag: bool = False
    degenerate: bool = False

    def as_dict(self) -> dict:
        return {
            "scores": dict(self.scores),
            "method": self.method,
            "drift_flag": self.drift_flag,
            "degenerate": self.degenerate,
        }


class CoalitionEvaluator:
    """Coalition value function f(S) for one explanation target.

    f(S) is the mean class-1 vote share of the model over hybrid
    instances that take the target's values on S and a background row's
    values elsewhere. f over the full feature set therefore equals the
    model's output on the target itself, and f of the empty set does
    not depend on the target.
    """

    def __init__(self, model: ArfEnsemble, background: Sequence[Instance]):
        if not background:
            raise InsufficientDataError("background sample is empty")
        self.model = model
        self.background = [dict(b.features) for b in background]

    def bind(self, x, features: Sequence[str]) -> "_BoundEvaluator":
        target = x.features if isinstance(x, Instance) else x
        return _BoundEvaluator(self, dict(target), list(features))


class _BoundEvaluator:
    """f(S) specialized to one target, with coalition caching."""

    def __init__(self, parent: CoalitionEvaluator, target: dict[str, float], features: list[str]):
        self.model = parent.model
        self.background = parent.background
        self.target = target
        self.features = features
        self._cache: dict[int, float] = {}

    def value(self, mask: int) -> float:
        cached = self._cache.get(mask)
        if cached is not None:
            return cached
        overlay = {
            f: self.target[f]
            for i, f in enumerate(self.features)
            if mask >> i & 1
        }
        total = 0.0
        predict = self.model.predict_proba_one
        for row in self.background:
            hybrid = dict(row)
            hybrid.update(overlay)
            total += predict(hybrid)[1]
        out = total / len(self.background)
        self._cache[mask] = out
        return out

    def value_of(self, subset: Sequence[str]) -> float:
        mask = 0
        for f in subset:
            mask |= 1 << self.features.index(f)
        return self.value(mask)


def shapley(x, evaluator: CoalitionEvaluator, features: Sequence[str]) -> dict[str, float]:
    """Exact Shapley value of every feature for this target.

    Enumerates all coalitions of the given features; refuses more than
    MAX_EXACT_FEATURES rather than approximating.
    """
    features = list(features)
    d = len(features)
    if d == 0:
        return {}
    if d > MAX_EXACT_FEATURES:
        raise FeatureBudgetError(
            f"exact enumeration over {d} features exceeds the budget of "
            f"{MAX_EXACT_FEATURES}"
        )
    bound = evaluator.bind(x, features)
    fact = [math.factorial(k) for k in range(d + 1)]
    weight = [fact[s] * fact[d - s - 1] / fact[d] for s in range(d)]
    values = [bound.value(mask) for mask in range(1 << d)]
    phi = {}
    for j, f in enumerate(features):
        bit = 1 << j
        acc = 0.0
        for mask in range(1 << d):
            if mask & bit:
                continue
            acc += weight[mask.bit_count()] * (values[mask | bit] - values[mask])
        phi[f] = acc
    return phi


def shap_importance(x, evaluator: CoalitionEvaluator, features: Sequence[str]) -> ImportanceVector:
    """Absolute, normalized Shapley scores."""
    phi = shapley(x, evaluator, features)
    magnitudes = {f: abs(v) for f, v in phi.items()}
    total = sum(magnitudes.values())
    if total == 0.0:
        return ImportanceVector(magnitudes, "SHAP", degenerate=True)
    return ImportanceVector({f: v / total for f, v in magnitudes.items()}, "SHAP")


def gini(stats: NodeStats) -> float:
    """Gini impurity of a node's class counts."""
    if stats.total <= 0:
        raise UndefinedImpurityError("gini is undefined on an empty node")
    return gini_from_counts(*stats.class_counts)


def mdi_node(node: _Node) -> float:
    """Impurity decrease of one split node, clamped at zero.

    Uses the node's split-time statistics against its children's
    current (or, once they split themselves, frozen) statistics, so the
    raw value can go negative when a child's class mix shifts after the
    split; negative values are clamped.
    """
    if node.is_leaf:
        raise ValueError("impurity decrease is defined on split nodes only")
    parent = node.frozen
    left = node.left.stats_for_split_scoring()
    right = node.right.stats_for_split_scoring()
    decrease = (
        gini(parent)
        - (left.total / parent.total) * gini(left)
        - (right.total / parent.total) * gini(right)
    )
    return max(decrease, 0.0)


def mdi_importance(
    x,
    ensemble: ArfEnsemble,
    features: Sequence[str] | None = None,
) -> ImportanceVector:
    """Path-based importance: credit every split node on the target's
    decision paths to its split feature, then normalize."""
    if features is None:
        target = x.features if isinstance(x, Instance) else x
        features = list(target)
    scores = {f: 0.0 for f in features}
    for tree in ensemble.trees:
        for node, feature in tree.route(x):
            if feature is None:
                continue
            contribution = mdi_node(node)
            if feature in scores:
                scores[feature] += contribution
            else:
                scores[feature] = contribution
    total = sum(scores.values())
    if total == 0.0:
        return ImportanceVector(scores, "MDI", degenerate=True)
    return ImportanceVector({f: v / total for f, v in scores.items()}, "MDI")
