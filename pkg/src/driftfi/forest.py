"""Incremental Hoeffding-tree learners and the adaptive forest ensemble.

Trees grow one instance at a time from per-leaf class counts and
fixed-size numeric summaries. The ensemble combines online bagging
(Poisson-weighted replication) with per-tree warning and drift
detectors: a warning starts a background tree, a drift swaps it in.
Split-time statistics are kept on every internal node because the
path-based importance scores in :mod:`driftfi.explain` read them back.
"""

from __future__ import annotations

import json
import math
import random
from dataclasses import dataclass, field
from typing import Iterator, Mapping

import numpy as np

from .adwin import AdaptiveWindow
from .errors import MalformedInstanceError

FORMAT_VERSION = 1


@dataclass
class Instance:
    """One streamed sample: sparse feature map plus a binary label.

    ``label`` may be None for prediction-only instances; training
    requires it.
    """

    features: dict[str, float]
    label: int | None = None


@dataclass(frozen=True)
class NodeStats:
    """Class counts observed at a node."""

    class_counts: tuple[float, float]
    total: float


def gini_from_counts(c0: float, c1: float) -> float:
    """Gini impurity of a two-class count pair."""
    n = c0 + c1
    if n <= 0:
        return 0.0
    p0 = c0 / n
    p1 = c1 / n
    return 1.0 - (p0 * p0 + p1 * p1)


def _features_of(x) -> Mapping[str, float]:
    return x.features if isinstance(x, Instance) else x


class _Histogram:
    """Bounded numeric summary of one feature at one leaf.

    Stays exact (distinct value -> class counts) while the number of
    distinct values is below the bin budget, then collapses to
    fixed-width bins over the observed range. Either form supports
    scanning candidate binary cuts.
    """

    __slots__ = ("bins", "exact", "lo", "hi", "step", "counts0", "counts1", "t0", "t1")

    def __init__(self, bins: int):
        self.bins = bins
        self.exact: dict[float, list[float]] | None = {}
        self.lo = 0.0
        self.hi = 0.0
        self.step = 0.0
        self.counts0: list[float] | None = None
        self.counts1: list[float] | None = None
        self.t0 = 0.0
        self.t1 = 0.0

    def add(self, value: float, label: int, weight: float) -> None:
        if label == 0:
            self.t0 += weight
        else:
            self.t1 += weight
        if self.exact is not None:
            cell = self.exact.get(value)
            if cell is None:
                self.exact[value] = cell = [0.0, 0.0]
            cell[label] += weight
            if len(self.exact) >= self.bins:
                self._to_binned()
            return
        idx = int((value - self.lo) / self.step)
        if idx < 0:
            idx = 0
        elif idx >= self.bins:
            idx = self.bins - 1
        if label == 0:
            self.counts0[idx] += weight
        else:
            self.counts1[idx] += weight

    def _to_binned(self) -> None:
        values = sorted(self.exact)
        self.lo = values[0]
        self.hi = values[-1]
        self.step = (self.hi - self.lo) / self.bins
        self.counts0 = [0.0] * self.bins
        self.counts1 = [0.0] * self.bins
        for v, (w0, w1) in self.exact.items():
            idx = min(int((v - self.lo) / self.step), self.bins - 1)
            self.counts0[idx] += w0
            self.counts1[idx] += w1
        self.exact = None

    def can_split(self) -> bool:
        if self.exact is not None:
            return len(self.exact) >= 2
        return True

    def best_cut(self):
        """Best (decrease, threshold, left_counts, right_counts) or None.

        The decrease is Gini(parent) minus the weighted child Gini,
        computed over the samples this histogram has seen.
        """
        if self.exact is not None:
            values = sorted(self.exact)
            if len(values) < 2:
                return None
            lefts = []
            acc0 = acc1 = 0.0
            for v, nxt in zip(values, values[1:]):
                w0, w1 = self.exact[v]
                acc0 += w0
                acc1 += w1
                lefts.append(((v + nxt) / 2.0, acc0, acc1))
        else:
            lefts = []
            acc0 = acc1 = 0.0
            for i in range(self.bins - 1):
                acc0 += self.counts0[i]
                acc1 += self.counts1[i]
                lefts.append((self.lo + (i + 1) * self.step, acc0, acc1))
        n = self.t0 + self.t1
        if n <= 0:
            return None
        parent_gini = gini_from_counts(self.t0, self.t1)
        best = None
        for thr, l0, l1 in lefts:
            ln = l0 + l1
            rn = n - ln
            if ln <= 0 or rn <= 0:
                continue
            r0 = self.t0 - l0
            r1 = self.t1 - l1
            dec = (
                parent_gini
                - (ln / n) * gini_from_counts(l0, l1)
                - (rn / n) * gini_from_counts(r0, r1)
            )
            if best is None or dec > best[0]:
                best = (dec, thr, (l0, l1), (r0, r1))
        return best


class _FeatureRegistry:
    """Tracks feature arrival order and which features have shown
    variation (only those can ever yield a nonzero-gain split and are
    eligible for subspace sampling)."""

    def __init__(self):
        self.order: list[str] = []
        self.index: dict[str, int] = {}
        self.first_seen: dict[str, float] = {}
        self.pool: list[str] = []
        self._pool_set: set[str] = set()

    def observe(self, features: Mapping[str, float]) -> None:
        for f, v in features.items():
            if f not in self.index:
                self.index[f] = len(self.order)
                self.order.append(f)
                self.first_seen[f] = v
            elif f not in self._pool_set and v != self.first_seen[f]:
                self._pool_set.add(f)
                self.pool.append(f)

    def subspace_target(self) -> int:
        d = len(self.pool)
        if d == 0:
            return 0
        return min(d, math.ceil(math.sqrt(d)) + 1)


class _Node:
    """Tree node; a leaf until ``split`` turns it into a binary split."""

    __slots__ = (
        "depth",
        "class_counts",
        "total",
        "hists",
        "subspace",
        "_subspace_set",
        "since_eval",
        "feature",
        "threshold",
        "left",
        "right",
        "frozen",
        "left_mass",
        "right_mass",
    )

    def __init__(self, depth: int, class_counts: tuple[float, float] = (0.0, 0.0)):
        self.depth = depth
        self.class_counts = [class_counts[0], class_counts[1]]
        self.total = class_counts[0] + class_counts[1]
        self.hists: dict[str, _Histogram] = {}
        self.subspace: list[str] = []
        self._subspace_set: set[str] = set()
        self.since_eval = 0.0
        self.feature: str | None = None
        self.threshold = 0.0
        self.left: _Node | None = None
        self.right: _Node | None = None
        self.frozen: NodeStats | None = None
        self.left_mass = 0.0
        self.right_mass = 0.0

    @property
    def is_leaf(self) -> bool:
        return self.feature is None

    def live_stats(self) -> NodeStats:
        return NodeStats((self.class_counts[0], self.class_counts[1]), self.total)

    def stats_for_split_scoring(self) -> NodeStats:
        """Frozen stats for internal nodes, live stats for leaves."""
        return self.frozen if self.frozen is not None else self.live_stats()

    def split_candidates(self) -> list[str]:
        """Features with running summaries at this leaf."""
        return list(self.hists)

    def vote(self) -> tuple[float, float]:
        c0, c1 = self.class_counts
        if c0 == c1:
            return (0.5, 0.5)
        return (1.0, 0.0) if c0 > c1 else (0.0, 1.0)


class HoeffdingTree:
    """Binary streaming decision tree grown under the Hoeffding bound.

    A leaf attempts a split every ``grace_period`` observed weight; the
    best candidate is accepted once its Gini decrease beats the
    runner-up by the bound, or once the bound itself drops below
    ``tie_threshold``. Zero-gain candidates are never accepted.
    """

    def __init__(
        self,
        grace_period: int = 50,
        split_confidence: float = 1e-7,
        tie_threshold: float = 0.05,
        histogram_bins: int = 32,
        max_depth: int | None = None,
        seed: int = 0,
        registry: _FeatureRegistry | None = None,
    ):
        self.grace_period = grace_period
        self.split_confidence = split_confidence
        self.tie_threshold = tie_threshold
        self.histogram_bins = histogram_bins
        self.max_depth = max_depth
        self.rng = random.Random(seed)
        self._owns_registry = registry is None
        self.registry = registry if registry is not None else _FeatureRegistry()
        self.root = _Node(0)

    # -- training ----------------------------------------------------

    def learn_one(self, x, weight: float = 1.0) -> None:
        features = _features_of(x)
        label = x.label if isinstance(x, Instance) else None
        if label is None:
            raise MalformedInstanceError("training instance has no label")
        if self._owns_registry:
            self.registry.observe(features)
        leaf = self._route_to_leaf(features)
        self._update_leaf(leaf, features, label, weight)

    def _update_leaf(self, leaf: _Node, features, label: int, weight: float) -> None:
        leaf.class_counts[label] += weight
        leaf.total += weight
        leaf.since_eval += weight
        for f, v in features.items():
            hist = leaf.hists.get(f)
            if hist is None:
                leaf.hists[f] = hist = _Histogram(self.histogram_bins)
            hist.add(v, label, weight)
        self._top_up_subspace(leaf)
        if leaf.since_eval >= self.grace_period:
            leaf.since_eval = 0.0
            self._attempt_split(leaf)

    def _top_up_subspace(self, leaf: _Node) -> None:
        target = self.registry.subspace_target()
        if len(leaf.subspace) >= target:
            return
        missing = [f for f in self.registry.pool if f not in leaf._subspace_set]
        if not missing:
            return
        take = min(target - len(leaf.subspace), len(missing))
        for f in self.rng.sample(missing, take):
            leaf.subspace.append(f)
            leaf._subspace_set.add(f)

    def _attempt_split(self, leaf: _Node) -> None:
        if leaf.class_counts[0] == 0 or leaf.class_counts[1] == 0:
            return
        if self.max_depth is not None and leaf.depth >= self.max_depth:
            return
        candidates = []
        for f in leaf.subspace:
            hist = leaf.hists.get(f)
            if hist is None or not hist.can_split():
                continue
            cut = hist.best_cut()
            if cut is None or cut[0] <= 0.0:
                continue
            dec, thr, left_counts, right_counts = cut
            candidates.append(
                (-dec, self.registry.index[f], f, thr, left_counts, right_counts)
            )
        if not candidates:
            return
        candidates.sort()
        best = candidates[0]
        best_dec = -best[0]
        second_dec = -candidates[1][0] if len(candidates) > 1 else 0.0
        eps = self._hoeffding_bound(leaf.total)
        if best_dec - second_dec > eps or eps < self.tie_threshold:
            self._split(leaf, best[2], best[3], best[4], best[5])

    def _hoeffding_bound(self, n: float) -> float:
        return math.sqrt(math.log(1.0 / self.split_confidence) / (2.0 * n))

    def _split(self, leaf: _Node, feature: str, threshold: float, left_counts, right_counts) -> None:
        leaf.frozen = leaf.live_stats()
        leaf.feature = feature
        leaf.threshold = threshold
        leaf.left_mass = left_counts[0] + left_counts[1]
        leaf.right_mass = right_counts[0] + right_counts[1]
        pool = self.registry.pool
        target = self.registry.subspace_target()
        for side, counts in (("left", left_counts), ("right", right_counts)):
            child = _Node(leaf.depth + 1, (counts[0], counts[1]))
            child.subspace = self.rng.sample(pool, min(target, len(pool)))
            child._subspace_set = set(child.subspace)
            setattr(leaf, side, child)
        leaf.hists = {}
        leaf.subspace = []
        leaf._subspace_set = set()

    # -- inference ---------------------------------------------------

    def _child_for(self, node: _Node, features: Mapping[str, float]) -> _Node:
        value = features.get(node.feature)
        if value is None:
            # missing split feature: follow the heavier split-time side
            return node.left if node.left_mass >= node.right_mass else node.right
        return node.left if value <= node.threshold else node.right

    def _route_to_leaf(self, features: Mapping[str, float]) -> _Node:
        node = self.root
        while not node.is_leaf:
            node = self._child_for(node, features)
        return node

    def route(self, x) -> list[tuple[_Node, str | None]]:
        """Root-to-leaf decision path as (node, split-feature) pairs;
        the terminal leaf carries None."""
        features = _features_of(x)
        path = []
        node = self.root
        while not node.is_leaf:
            path.append((node, node.feature))
            node = self._child_for(node, features)
        path.append((node, None))
        return path

    def predict_proba_one(self, x) -> tuple[float, float]:
        return self._route_to_leaf(_features_of(x)).vote()

    # -- introspection -----------------------------------------------

    def iter_nodes(self) -> Iterator[_Node]:
        stack = [self.root]
        while stack:
            node = stack.pop()
            yield node
            if not node.is_leaf:
                stack.append(node.right)
                stack.append(node.left)

    def n_nodes(self) -> int:
        return sum(1 for _ in self.iter_nodes())

    def to_dict(self) -> dict:
        def encode(node: _Node) -> dict:
            if node.is_leaf:
                return {
                    "kind": "leaf",
                    "class_counts": list(node.class_counts),
                    "total": node.total,
                }
            return {
                "kind": "split",
                "feature": node.feature,
                "threshold": node.threshold,
                "frozen_class_counts": list(node.frozen.class_counts),
                "frozen_total": node.frozen.total,
                "left_mass": node.left_mass,
                "right_mass": node.right_mass,
                "left": encode(node.left),
                "right": encode(node.right),
            }

        return {"root": encode(self.root)}


@dataclass
class ArfConfig:
    """Forest hyperparameters."""

    n_trees: int = 10
    bagging_lambda: float = 6.0
    grace_period: int = 50
    split_confidence: float = 1e-7
    tie_threshold: float = 0.05
    warning_delta: float = 0.01
    drift_delta: float = 0.001
    histogram_bins: int = 32
    max_depth: int | None = None
    seed: int = 42

    def as_dict(self) -> dict:
        return {
            "n_trees": self.n_trees,
            "bagging_lambda": self.bagging_lambda,
            "grace_period": self.grace_period,
            "split_confidence": self.split_confidence,
            "tie_threshold": self.tie_threshold,
            "warning_delta": self.warning_delta,
            "drift_delta": self.drift_delta,
            "histogram_bins": self.histogram_bins,
            "max_depth": self.max_depth,
            "seed": self.seed,
        }


class ArfEnsemble:
    """Adaptive forest: bagged Hoeffding trees with drift recovery.

    Every labeled instance is replicated per tree with a
    Poisson(``bagging_lambda``) weight. Each member's prediction
    correctness feeds a warning and a drift detector; a warning starts
    a background tree trained in parallel, a drift replaces the member
    with its background tree (or a fresh one). The member count never
    changes.
    """

    def __init__(self, config: ArfConfig | None = None, **overrides):
        if config is None:
            config = ArfConfig(**overrides)
        elif overrides:
            raise ValueError("pass either a config or keyword overrides, not both")
        self.config = config
        self.registry = _FeatureRegistry()
        self._poisson_rng = np.random.default_rng([config.seed, 0])
        self._seed_rng = random.Random(config.seed + 1)
        self.trees = [self._new_tree() for _ in range(config.n_trees)]
        self._warning = [self._new_detector(config.warning_delta) for _ in self.trees]
        self._drift = [self._new_detector(config.drift_delta) for _ in self.trees]
        self.background: list[HoeffdingTree | None] = [None] * config.n_trees
        self.warning_active = [False] * config.n_trees
        self.n_warnings = 0
        self.n_drifts = 0

    def _new_tree(self) -> HoeffdingTree:
        cfg = self.config
        return HoeffdingTree(
            grace_period=cfg.grace_period,
            split_confidence=cfg.split_confidence,
            tie_threshold=cfg.tie_threshold,
            histogram_bins=cfg.histogram_bins,
            max_depth=cfg.max_depth,
            seed=self._seed_rng.randrange(2**32),
            registry=self.registry,
        )

    def _new_detector(self, delta: float) -> AdaptiveWindow:
        return AdaptiveWindow(delta=delta)

    @property
    def n_trees(self) -> int:
        return len(self.trees)

    def learn_one(self, x: Instance) -> None:
        """Train every member (and background tree) on one instance."""
        if not x.features:
            raise MalformedInstanceError("instance has no features")
        for f, v in x.features.items():
            if not math.isfinite(v):
                raise MalformedInstanceError(f"non-finite value for feature {f!r}")
        if x.label not in (0, 1):
            raise MalformedInstanceError(f"label must be 0 or 1, got {x.label!r}")
        self.registry.observe(x.features)
        weights = self._poisson_rng.poisson(self.config.bagging_lambda, self.n_trees)
        for i, tree in enumerate(self.trees):
            vote = tree.predict_proba_one(x.features)
            predicted = 0 if vote[0] >= vote[1] else 1
            correct = 1.0 if predicted == x.label else 0.0
            warned = self._warning[i].update(correct)
            drifted = self._drift[i].update(correct)
            if warned and self.background[i] is None:
                self.background[i] = self._new_tree()
                self.warning_active[i] = True
                self._warning[i] = self._new_detector(self.config.warning_delta)
                self.n_warnings += 1
            if drifted:
                replacement = self.background[i]
                self.trees[i] = replacement if replacement is not None else self._new_tree()
                tree = self.trees[i]
                self.background[i] = None
                self.warning_active[i] = False
                self._warning[i] = self._new_detector(self.config.warning_delta)
                self._drift[i] = self._new_detector(self.config.drift_delta)
                self.n_drifts += 1
            w = float(weights[i])
            if w > 0:
                tree.learn_one(x, w)
                if self.background[i] is not None:
                    self.background[i].learn_one(x, w)

    def predict_proba_one(self, x) -> dict[int, float]:
        """Per-class vote share over the members; sums to 1."""
        v0 = v1 = 0.0
        features = _features_of(x)
        for tree in self.trees:
            a, b = tree.predict_proba_one(features)
            v0 += a
            v1 += b
        m = float(self.n_trees)
        return {0: v0 / m, 1: v1 / m}

    def predict_one(self, x) -> int:
        """Majority-vote class; ties resolve to class 0."""
        proba = self.predict_proba_one(x)
        return 0 if proba[0] >= proba[1] else 1

    def to_dict(self) -> dict:
        return {
            "format_version": FORMAT_VERSION,
            "config": self.config.as_dict(),
            "feature_order": list(self.registry.order),
            "trees": [tree.to_dict() for tree in self.trees],
        }

    def to_json(self, indent: int | None = 2) -> str:
        return json.dumps(self.to_dict(), indent=indent)
