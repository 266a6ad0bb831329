"""Prequential experiment protocol and agreement metrics.

The stream is cut into equal chronological batches; within each batch
the first 80% trains the forest incrementally and the last 20% is held
out. Explanation targets are drawn from the held-out part and every
requested method explains the identical targets on the identical
frozen model, with the exact coalition method serving as ground truth
for the agreement metrics.
"""

from __future__ import annotations

import csv
import json
import time
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np
from scipy import stats as scipy_stats

from .dafi import DafiConfig, draw_background, explain_batch, fan_out
from .data import SyntheticSpec, generate, mask_features
from .errors import ConfigError
from .explain import CoalitionEvaluator, ImportanceVector, mdi_importance, shap_importance
from .forest import ArfConfig, ArfEnsemble, Instance

KNOWN_METHODS = ("SHAP", "MDI", "DAFI")

# fields zeroed by the deterministic-snapshot mode; everything else in a
# report is a pure function of config + seed + stream
TIMING_FIELDS = ("runtime_s", "saved_pct", "saved_pct_raw", "total_runtime_s")


# ---------------------------------------------------------------------------
# metrics


def dynamic_top_k(scores: Mapping[str, float], theta: float = 0.8) -> tuple[int, list[str]]:
    """Smallest prefix of descending scores whose cumulative weight
    reaches ``theta``; ties resolve by schema order.

    Raises ValueError on an all-zero vector (undefined k).
    """
    if not 0.0 < theta <= 1.0:
        raise ValueError("theta must lie in (0, 1]")
    order = rank_features(scores)
    if sum(scores.values()) <= 0.0:
        raise ValueError("top-k is undefined on an all-zero score vector")
    cum = 0.0
    for k, f in enumerate(order, start=1):
        cum += scores[f]
        if cum + 1e-12 >= theta:
            return k, order[:k]
    return len(order), order


def rank_features(scores: Mapping[str, float]) -> list[str]:
    """Features by descending score, ties broken by schema order (the
    insertion order of the mapping)."""
    position = {f: i for i, f in enumerate(scores)}
    return sorted(scores, key=lambda f: (-scores[f], position[f]))


def top_features(scores: Mapping[str, float], k: int) -> list[str]:
    return rank_features(scores)[:k]


def topk_set_match(reference_topk: Sequence[str], other_scores: Mapping[str, float]) -> int:
    """1 when the other method's top-k is the same set of features."""
    other = top_features(other_scores, len(reference_topk))
    return int(set(reference_topk) == set(other))


def topk_exact_match(reference_topk: Sequence[str], other_scores: Mapping[str, float]) -> int:
    """1 when the other method's top-k matches order and all."""
    other = top_features(other_scores, len(reference_topk))
    return int(list(reference_topk) == other)


def spearman_norm(scores_a: Sequence[float], scores_b: Sequence[float]) -> float | None:
    """Rank correlation mapped to [0, 1] via (rho + 1) / 2.

    Ties receive average ranks. Returns None when undefined (fewer than
    two features, or a zero-variance ranking)."""
    a = np.asarray(scores_a, dtype=float)
    b = np.asarray(scores_b, dtype=float)
    if a.size != b.size:
        raise ValueError("score vectors must cover the same features")
    if a.size < 2:
        return None
    rho = scipy_stats.spearmanr(a, b)[0]
    if np.isnan(rho):
        return None
    return (float(rho) + 1.0) / 2.0


def saved_runtime_pct(method_seconds: float, shap_seconds: float) -> float:
    """Runtime saved versus the exact-method baseline, clamped at 0."""
    if shap_seconds <= 0:
        raise ValueError("baseline runtime must be positive")
    return max(0.0, 100.0 * (1.0 - method_seconds / shap_seconds))


# ---------------------------------------------------------------------------
# experiment plan and report


@dataclass
class BatchPlan:
    """Chronological equal batches with an 80:20 in-batch split and a
    feature arrival schedule (epoch -> features added)."""

    n_batches: int
    train_fraction: float = 0.8
    feature_schedule: list[tuple[int, list[str]]] = field(default_factory=list)

    def __post_init__(self):
        if self.n_batches < 1:
            raise ConfigError("need at least one batch")
        if not 0.0 < self.train_fraction < 1.0:
            raise ConfigError("train_fraction must lie in (0, 1)")

    def active_features(self, epoch: int, order: Sequence[str]) -> list[str]:
        live = {
            f
            for start, group in self.feature_schedule
            if start <= epoch
            for f in group
        }
        return [f for f in order if f in live]

    def validate_against(self, order: Sequence[str]) -> list[str]:
        """All violations (not just the first) of the schedule against
        the dataset's feature columns."""
        problems = []
        seen: set[str] = set()
        for epoch, group in self.feature_schedule:
            if epoch < 0:
                problems.append(f"schedule epoch {epoch} is negative")
            for f in group:
                if f not in order:
                    problems.append(f"scheduled feature {f!r} not in dataset")
                if f in seen:
                    problems.append(f"feature {f!r} scheduled more than once")
                seen.add(f)
        if not self.feature_schedule:
            problems.append("feature schedule is empty")
        elif not self.active_features(0, order):
            problems.append("no features active at epoch 0")
        return problems

    def split(self, instances: Sequence[Instance]) -> list[list[Instance]]:
        n = len(instances)
        if n < self.n_batches * 2:
            raise ConfigError(
                f"{n} instances cannot fill {self.n_batches} batches of at least 2"
            )
        base = n // self.n_batches
        batches = []
        for t in range(self.n_batches):
            lo = t * base
            hi = (t + 1) * base if t < self.n_batches - 1 else n
            batches.append(list(instances[lo:hi]))
        return batches

    def as_dict(self) -> dict:
        return {
            "n_batches": self.n_batches,
            "train_fraction": self.train_fraction,
            "feature_schedule": [[e, list(g)] for e, g in self.feature_schedule],
        }


@dataclass
class MethodBatchResult:
    """One method's runtime and agreement scores on one batch."""

    runtime_s: float
    topk_set: float | None = None
    topk_exact: float | None = None
    spearman: float | None = None
    n_targets: int = 0
    n_scored: int = 0
    n_spearman: int = 0
    n_degenerate: int = 0

    def as_dict(self) -> dict:
        return {
            "runtime_s": self.runtime_s,
            "topk_set": self.topk_set,
            "topk_exact": self.topk_exact,
            "spearman": self.spearman,
            "n_targets": self.n_targets,
            "n_scored": self.n_scored,
            "n_spearman": self.n_spearman,
            "n_degenerate": self.n_degenerate,
        }


@dataclass
class BatchRecord:
    index: int
    n_train: int
    n_test: int
    active_features: list[str]
    train_accuracy: float
    test_accuracy: float
    drift_detected: bool | None = None
    drift_report: dict | None = None
    methods: dict[str, MethodBatchResult] = field(default_factory=dict)

    def as_dict(self) -> dict:
        return {
            "index": self.index,
            "n_train": self.n_train,
            "n_test": self.n_test,
            "active_features": list(self.active_features),
            "train_accuracy": self.train_accuracy,
            "test_accuracy": self.test_accuracy,
            "drift_detected": self.drift_detected,
            "drift_report": self.drift_report,
            "methods": {m: r.as_dict() for m, r in self.methods.items()},
        }


@dataclass
class ExperimentReport:
    config: dict
    batches: list[BatchRecord]
    summary: dict

    def as_dict(self) -> dict:
        return {
            "config": self.config,
            "batches": [b.as_dict() for b in self.batches],
            "summary": self.summary,
        }


def _mean(values: list[float]) -> float | None:
    return sum(values) / len(values) if values else None


def compute_summary(batches: Sequence[BatchRecord], methods: Sequence[str]) -> dict:
    """Aggregate per-batch records; recomputable from the report alone."""
    per_method: dict[str, dict] = {}
    shap_total = None
    if "SHAP" in methods:
        shap_total = sum(b.methods["SHAP"].runtime_s for b in batches)
    for m in methods:
        results = [b.methods[m] for b in batches]
        total = sum(r.runtime_s for r in results)
        entry = {
            "total_runtime_s": total,
            "saved_pct": None,
            "saved_pct_raw": None,
            "topk_set": _mean([r.topk_set for r in results if r.topk_set is not None]),
            "topk_exact": _mean([r.topk_exact for r in results if r.topk_exact is not None]),
            "spearman": _mean([r.spearman for r in results if r.spearman is not None]),
            "n_degenerate": sum(r.n_degenerate for r in results),
        }
        if shap_total is not None and shap_total > 0:
            entry["saved_pct"] = saved_runtime_pct(total, shap_total)
            entry["saved_pct_raw"] = 100.0 * (1.0 - total / shap_total)
        per_method[m] = entry
    drift_flags = [b.drift_detected for b in batches if b.drift_detected is not None]
    return {
        "per_method": per_method,
        "n_batches": len(batches),
        "drift_batches": sum(1 for f in drift_flags if f) if drift_flags else None,
        "mean_train_accuracy": _mean([b.train_accuracy for b in batches]),
        "mean_test_accuracy": _mean([b.test_accuracy for b in batches]),
    }


# ---------------------------------------------------------------------------
# the experiment loop


def _score_against_truth(
    truth: list[ImportanceVector],
    candidate: list[ImportanceVector],
    theta: float,
    result: MethodBatchResult,
    spearman_topk_only: bool,
) -> None:
    sets, exacts, spearmans = [], [], []
    for sv, mv in zip(truth, candidate):
        if mv.degenerate:
            result.n_degenerate += 1
        if sv.degenerate:
            continue
        _, shap_top = dynamic_top_k(sv.scores, theta)
        sets.append(topk_set_match(shap_top, mv.scores))
        exacts.append(topk_exact_match(shap_top, mv.scores))
        if spearman_topk_only:
            keys = shap_top
        else:
            keys = list(sv.scores)
        sp = spearman_norm(
            [sv.scores[f] for f in keys], [mv.scores.get(f, 0.0) for f in keys]
        )
        if sp is not None:
            spearmans.append(sp)
    result.n_scored = len(sets)
    result.n_spearman = len(spearmans)
    result.topk_set = _mean([float(v) for v in sets])
    result.topk_exact = _mean([float(v) for v in exacts])
    result.spearman = _mean(spearmans)


def run_experiment(
    instances: Sequence[Instance],
    feature_order: Sequence[str],
    plan: BatchPlan,
    arf_config: ArfConfig,
    dafi_config: DafiConfig,
    methods: Sequence[str] = KNOWN_METHODS,
    theta: float = 0.8,
    workers: int = 1,
    spearman_topk_only: bool = False,
) -> ExperimentReport:
    """Run the full protocol and collect the report.

    One forest is trained across all batches; every requested method
    explains the same sampled targets on the same model state, so
    runtimes and agreement scores are directly comparable.
    """
    methods = list(methods)
    for m in methods:
        if m not in KNOWN_METHODS:
            raise ConfigError(f"unknown method {m!r}; expected one of {KNOWN_METHODS}")
    problems = plan.validate_against(feature_order)
    if problems:
        raise ConfigError("; ".join(problems))
    dafi_config.validate()

    batches = plan.split(instances)
    ensemble = ArfEnsemble(arf_config)
    records: list[BatchRecord] = []
    prev_train: list[Instance] | None = None
    prev_active: list[str] | None = None

    for t, raw_batch in enumerate(batches):
        active = plan.active_features(t, feature_order)
        if not active:
            raise ConfigError(f"no active features at epoch {t}")
        masked = list(mask_features(raw_batch, active))
        split_at = int(len(masked) * plan.train_fraction)
        split_at = min(max(split_at, 1), len(masked) - 1)
        train, test = masked[:split_at], masked[split_at:]

        correct = 0
        for inst in train:
            if ensemble.predict_one(inst.features) == inst.label:
                correct += 1
            ensemble.learn_one(inst)
        train_acc = correct / len(train)
        test_acc = sum(
            1 for inst in test if ensemble.predict_one(inst.features) == inst.label
        ) / len(test)

        rng = np.random.default_rng([dafi_config.seed, 2, t])
        n_targets = min(dafi_config.n_samples, len(test))
        picks = sorted(rng.choice(len(test), size=n_targets, replace=False).tolist())
        targets = [test[i] for i in picks]

        record = BatchRecord(
            index=t,
            n_train=len(train),
            n_test=len(test),
            active_features=active,
            train_accuracy=train_acc,
            test_accuracy=test_acc,
        )

        shap_vectors: list[ImportanceVector] | None = None
        method_vectors: dict[str, list[ImportanceVector]] = {}

        if "SHAP" in methods:
            start = time.perf_counter()
            background = draw_background(
                train, dafi_config.background_size, (dafi_config.seed, 1, t)
            )
            evaluator = CoalitionEvaluator(ensemble, background)
            vectors = fan_out(
                lambda x: shap_importance(x, evaluator, active), targets, workers
            )
            record.methods["SHAP"] = MethodBatchResult(
                runtime_s=time.perf_counter() - start, n_targets=len(targets)
            )
            method_vectors["SHAP"] = vectors
            shap_vectors = vectors

        if "MDI" in methods:
            start = time.perf_counter()
            vectors = fan_out(
                lambda x: mdi_importance(x, ensemble, active), targets, workers
            )
            record.methods["MDI"] = MethodBatchResult(
                runtime_s=time.perf_counter() - start, n_targets=len(targets)
            )
            method_vectors["MDI"] = vectors

        if "DAFI" in methods:
            outcome = explain_batch(
                ensemble,
                prev_train,
                train,
                targets,
                active,
                dafi_config,
                batch_index=t,
                drift_features=prev_active,
                workers=workers,
            )
            record.methods["DAFI"] = MethodBatchResult(
                runtime_s=outcome.elapsed_s, n_targets=len(targets)
            )
            method_vectors["DAFI"] = outcome.vectors
            record.drift_detected = (
                outcome.report.drift_detected if outcome.report else True
            )
            record.drift_report = outcome.report.as_dict() if outcome.report else None

        if shap_vectors is not None:
            for m, vectors in method_vectors.items():
                _score_against_truth(
                    shap_vectors, vectors, theta, record.methods[m], spearman_topk_only
                )

        records.append(record)
        prev_train = train
        prev_active = active

    config_echo = {
        "arf": arf_config.as_dict(),
        "dafi": {
            "eta": dafi_config.eta,
            "feature_budget": dafi_config.feature_budget,
            "background_size": dafi_config.background_size,
            "n_samples": dafi_config.n_samples,
            "seed": dafi_config.seed,
        },
        "plan": plan.as_dict(),
        "methods": methods,
        "theta": theta,
        "workers": workers,
        "spearman_topk_only": spearman_topk_only,
        "feature_order": list(feature_order),
    }
    return ExperimentReport(
        config=config_echo,
        batches=records,
        summary=compute_summary(records, methods),
    )


# ---------------------------------------------------------------------------
# scaling benchmarks


def bench_point(
    n_features: int,
    n_trees: int,
    n_instances: int = 1500,
    n_samples: int = 20,
    background_size: int = 32,
    theta: float = 0.8,
    noise: float = 0.1,
    seed: int = 42,
) -> dict:
    """Train once on a synthetic 80:20 split, then time both importance
    methods on the same held-out targets."""
    spec = SyntheticSpec(
        kind="threshold_sum",
        n_instances=n_instances,
        n_features=n_features,
        relevant=(0, 1),
        noise=noise,
        seed=seed,
    )
    instances = generate(spec)
    split_at = int(len(instances) * 0.8)
    train, test = instances[:split_at], instances[split_at:]
    features = list(spec.feature_names)

    ensemble = ArfEnsemble(ArfConfig(n_trees=n_trees, seed=seed))
    start = time.perf_counter()
    correct = 0
    for inst in train:
        if ensemble.predict_one(inst.features) == inst.label:
            correct += 1
        ensemble.learn_one(inst)
    train_runtime = time.perf_counter() - start
    train_acc = correct / len(train)
    test_acc = sum(
        1 for inst in test if ensemble.predict_one(inst.features) == inst.label
    ) / len(test)

    rng = np.random.default_rng([seed, 2, 0])
    picks = sorted(rng.choice(len(test), size=min(n_samples, len(test)), replace=False).tolist())
    targets = [test[i] for i in picks]

    start = time.perf_counter()
    background = draw_background(train, background_size, (seed, 1, 0))
    evaluator = CoalitionEvaluator(ensemble, background)
    shap_vectors = [shap_importance(x, evaluator, features) for x in targets]
    shap_runtime = time.perf_counter() - start

    start = time.perf_counter()
    mdi_vectors = [mdi_importance(x, ensemble, features) for x in targets]
    mdi_runtime = time.perf_counter() - start

    exacts = []
    for sv, mv in zip(shap_vectors, mdi_vectors):
        if sv.degenerate:
            continue
        _, shap_top = dynamic_top_k(sv.scores, theta)
        exacts.append(topk_exact_match(shap_top, mv.scores))
    return {
        "n_features": n_features,
        "n_trees": n_trees,
        "n_instances": n_instances,
        "n_samples": len(targets),
        "train_runtime_s": train_runtime,
        "train_accuracy": train_acc,
        "test_accuracy": test_acc,
        "shap_runtime_s": shap_runtime,
        "mdi_runtime_s": mdi_runtime,
        "topk_exact": _mean([float(v) for v in exacts]),
    }


# ---------------------------------------------------------------------------
# report files


def zero_timing_fields(doc):
    """Recursively zero wall-clock-derived fields for deterministic
    snapshots."""
    if isinstance(doc, dict):
        return {
            k: (0.0 if k in TIMING_FIELDS and isinstance(v, (int, float)) else zero_timing_fields(v))
            for k, v in doc.items()
        }
    if isinstance(doc, list):
        return [zero_timing_fields(v) for v in doc]
    return doc


def write_report_files(report: ExperimentReport, out_dir, timing_seed_free: bool = False) -> dict:
    """Write report.json, batches.csv, and accuracy_curve.csv; returns
    the paths written."""
    import os

    os.makedirs(out_dir, exist_ok=True)
    doc = report.as_dict()
    if timing_seed_free:
        doc = zero_timing_fields(doc)
    paths = {}

    report_path = os.path.join(out_dir, "report.json")
    with open(report_path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh, indent=2)
        fh.write("\n")
    paths["report"] = report_path

    batches_path = os.path.join(out_dir, "batches.csv")
    with open(batches_path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(
            [
                "batch",
                "method",
                "runtime_s",
                "topk_set",
                "topk_exact",
                "spearman",
                "drift_detected",
                "train_accuracy",
                "test_accuracy",
            ]
        )
        for batch in doc["batches"]:
            for m, r in batch["methods"].items():
                writer.writerow(
                    [
                        batch["index"],
                        m,
                        r["runtime_s"],
                        r["topk_set"],
                        r["topk_exact"],
                        r["spearman"],
                        batch["drift_detected"],
                        batch["train_accuracy"],
                        batch["test_accuracy"],
                    ]
                )
    paths["batches"] = batches_path

    curve_path = os.path.join(out_dir, "accuracy_curve.csv")
    with open(curve_path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["batch", "n_active_features", "train_accuracy", "test_accuracy"])
        for batch in doc["batches"]:
            writer.writerow(
                [
                    batch["index"],
                    len(batch["active_features"]),
                    batch["train_accuracy"],
                    batch["test_accuracy"],
                ]
            )
    paths["accuracy_curve"] = curve_path
    return paths
