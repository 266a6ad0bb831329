"""Command-line entry point: run experiments, scaling benchmarks, and
config validation.

Configuration comes from a JSON file; command-line flags override file
values. Defaults mirror the standard protocol: 10 trees, 50 explanation
targets per batch, top-k threshold 0.8, seed 42.
"""

from __future__ import annotations

import argparse
import csv
import json
import os
import sys
from dataclasses import dataclass, field

from .dafi import DafiConfig
from .data import BUILTIN_SCHEMAS, DatasetSchema, SyntheticSpec, generate, load_csv
from .errors import ConfigError, DriftFiError
from .forest import ArfConfig
from .harness import (
    KNOWN_METHODS,
    BatchPlan,
    bench_point,
    run_experiment,
    write_report_files,
)

DEFAULT_ETA = {"electricity": 1.0, "weather": 1.0, "network": 0.125}


@dataclass
class RunConfig:
    """One experiment invocation, resolved from file plus flag overrides."""

    dataset: dict = field(default_factory=dict)
    n_batches: int = 50
    feature_schedule: list | None = None
    n_trees: int = 10
    n_samples: int = 50
    eta: float | None = None
    theta: float = 0.8
    seed: int = 42
    methods: list[str] = field(default_factory=lambda: list(KNOWN_METHODS))
    background_size: int = 64
    workers: int = 1
    spearman_topk_only: bool = False
    timing_seed_free: bool = False
    out: str = "out"

    @classmethod
    def from_file(cls, path) -> "RunConfig":
        try:
            with open(path, encoding="utf-8") as fh:
                doc = json.load(fh)
        except FileNotFoundError:
            raise ConfigError(f"config file not found: {path}") from None
        except json.JSONDecodeError as err:
            raise ConfigError(f"config file is not valid JSON: {err}") from None
        known = set(cls.__dataclass_fields__)
        unknown = [k for k in doc if k not in known]
        if unknown:
            raise ConfigError(f"unknown config fields: {unknown}")
        return cls(**doc)

    def apply_overrides(self, args: argparse.Namespace) -> None:
        if getattr(args, "dataset", None):
            self.dataset = _parse_dataset_flag(args.dataset)
        for flag, attr in (
            ("out", "out"),
            ("seed", "seed"),
            ("eta", "eta"),
            ("trees", "n_trees"),
            ("samples", "n_samples"),
            ("theta", "theta"),
            ("workers", "workers"),
            ("batches", "n_batches"),
        ):
            value = getattr(args, flag, None)
            if value is not None:
                setattr(self, attr, value)
        if getattr(args, "methods", None):
            self.methods = [m.strip() for m in args.methods.split(",") if m.strip()]
        if getattr(args, "timing_seed_free", False):
            self.timing_seed_free = True

    def resolve_eta(self, schema_name: str | None) -> float:
        if self.eta is not None:
            return self.eta
        return DEFAULT_ETA.get(schema_name or "", 1.0)

    def validate(self, schema: DatasetSchema | None) -> list[str]:
        """Every violation found, not just the first."""
        problems = []
        if not self.dataset:
            problems.append("dataset: missing (give a csv/synthetic dataset)")
        kind = self.dataset.get("kind")
        if kind not in ("csv", "synthetic", None):
            problems.append(f"dataset.kind: unknown kind {kind!r}")
        if kind == "csv":
            path = self.dataset.get("path")
            if not path:
                problems.append("dataset.path: missing")
            elif not os.path.exists(path):
                problems.append(f"dataset.path: file not found: {path}")
        if self.n_batches < 1:
            problems.append(f"n_batches: must be >= 1, got {self.n_batches}")
        if self.n_trees < 1:
            problems.append(f"n_trees: must be >= 1, got {self.n_trees}")
        if self.n_samples < 1:
            problems.append(f"n_samples: must be >= 1, got {self.n_samples}")
        if self.eta is not None and self.eta <= 0:
            problems.append(f"eta: must be > 0, got {self.eta}")
        if not 0.0 < self.theta <= 1.0:
            problems.append(f"theta: must lie in (0, 1], got {self.theta}")
        if self.workers < 1:
            problems.append(f"workers: must be >= 1, got {self.workers}")
        if self.background_size < 1:
            problems.append(f"background_size: must be >= 1, got {self.background_size}")
        for m in self.methods:
            if m not in KNOWN_METHODS:
                problems.append(f"methods: unknown method {m!r}")
        if schema is not None:
            plan = self.build_plan(schema)
            problems.extend(
                f"feature_schedule: {p}" for p in plan.validate_against(schema.features)
            )
        return problems

    def build_plan(self, schema: DatasetSchema) -> BatchPlan:
        if self.feature_schedule is not None:
            schedule = [(int(e), list(g)) for e, g in self.feature_schedule]
        else:
            schedule = schema.feature_schedule
        return BatchPlan(n_batches=self.n_batches, feature_schedule=schedule)


def _parse_dataset_flag(text: str) -> dict:
    if text == "synthetic":
        return {"kind": "synthetic"}
    if ":" in text:
        schema, path = text.split(":", 1)
        return {"kind": "csv", "schema": schema, "path": path}
    raise ConfigError(
        f"cannot parse dataset {text!r}; use 'synthetic' or '<schema>:<csv path>'"
    )


def resolve_schema(config: RunConfig) -> DatasetSchema:
    ds = config.dataset
    kind = ds.get("kind")
    if kind == "synthetic":
        return _synthetic_spec(config).schema()
    if kind == "csv":
        if "schema_file" in ds:
            return DatasetSchema.from_json_file(ds["schema_file"])
        name = ds.get("schema")
        if name in BUILTIN_SCHEMAS:
            return BUILTIN_SCHEMAS[name]
        raise ConfigError(
            f"dataset.schema: unknown schema {name!r}; "
            f"builtins are {sorted(BUILTIN_SCHEMAS)} (or give schema_file)"
        )
    raise ConfigError(f"dataset.kind: unknown kind {kind!r}")


def _synthetic_spec(config: RunConfig) -> SyntheticSpec:
    ds = dict(config.dataset)
    ds.pop("kind", None)
    ds.setdefault("seed", config.seed)
    try:
        return SyntheticSpec(**ds)
    except TypeError as err:
        raise ConfigError(f"dataset: bad synthetic spec: {err}") from None


def load_dataset(config: RunConfig, schema: DatasetSchema):
    if config.dataset.get("kind") == "synthetic":
        return generate(_synthetic_spec(config)), 0
    stream = load_csv(config.dataset["path"], schema)
    instances = list(stream)
    return instances, stream.dropped


def cmd_run(config: RunConfig) -> int:
    schema = resolve_schema(config)
    problems = config.validate(schema)
    if problems:
        raise ConfigError("; ".join(problems))
    instances, dropped = load_dataset(config, schema)
    eta = config.resolve_eta(schema.name)
    report = run_experiment(
        instances,
        schema.features,
        config.build_plan(schema),
        ArfConfig(n_trees=config.n_trees, seed=config.seed),
        DafiConfig(
            eta=eta,
            background_size=config.background_size,
            n_samples=config.n_samples,
            seed=config.seed,
        ),
        methods=config.methods,
        theta=config.theta,
        workers=config.workers,
        spearman_topk_only=config.spearman_topk_only,
    )
    report.config["dataset"] = dict(config.dataset)
    report.config["dropped_rows"] = dropped
    report.config["eta"] = eta
    paths = write_report_files(report, config.out, config.timing_seed_free)
    for name, path in paths.items():
        print(f"{name}: {path}")
    return 0


def cmd_validate(config: RunConfig) -> int:
    try:
        schema = resolve_schema(config)
    except ConfigError as err:
        schema = None
        print(f"invalid: {err}")
    problems = config.validate(schema)
    if schema is None:
        return 2
    if problems:
        for p in problems:
            print(f"invalid: {p}")
        return 2
    print("ok")
    return 0


def cmd_bench(args: argparse.Namespace) -> int:
    feature_counts = _parse_counts(args.features) if args.features else []
    tree_counts = _parse_counts(args.trees) if args.trees else []
    if not feature_counts and not tree_counts:
        raise ConfigError("bench needs --features and/or --trees to sweep")
    rows = []
    for d in feature_counts:
        rows.append(
            {"sweep": "features", "value": d}
            | bench_point(
                n_features=d,
                n_trees=args.bench_trees,
                n_instances=args.instances,
                n_samples=args.samples,
                seed=args.seed,
            )
        )
    for m in tree_counts:
        rows.append(
            {"sweep": "trees", "value": m}
            | bench_point(
                n_features=args.bench_features,
                n_trees=m,
                n_instances=args.instances,
                n_samples=args.samples,
                seed=args.seed,
            )
        )
    os.makedirs(args.out, exist_ok=True)
    path = os.path.join(args.out, "bench.csv")
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.DictWriter(fh, fieldnames=list(rows[0]))
        writer.writeheader()
        writer.writerows(rows)
    for row in rows:
        print(
            f"{row['sweep']}={row['value']}: train {row['train_runtime_s']:.3f}s, "
            f"shap {row['shap_runtime_s']:.3f}s, mdi {row['mdi_runtime_s']:.3f}s"
        )
    print(f"bench: {path}")
    return 0


def _parse_counts(text: str) -> list[int]:
    try:
        counts = [int(part) for part in text.split(",") if part.strip()]
    except ValueError:
        raise ConfigError(f"cannot parse count list {text!r}") from None
    if any(c < 1 for c in counts):
        raise ConfigError("sweep counts must be positive")
    return counts


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="driftfi",
        description="Streaming forests with drift-aware feature importance.",
    )
    parser.add_argument(
        "--error-json",
        action="store_true",
        help="emit failures as a JSON object on stderr",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def add_config_flags(p):
        p.add_argument("--config", help="JSON config file")
        p.add_argument("--dataset", help="'synthetic' or '<schema>:<csv path>'")
        p.add_argument("--out", help="output directory")
        p.add_argument("--seed", type=int)
        p.add_argument("--eta", type=float, help="accumulated-drift threshold")
        p.add_argument("--trees", type=int, help="ensemble size")
        p.add_argument("--samples", type=int, help="explanation targets per batch")
        p.add_argument("--theta", type=float, help="top-k cumulative threshold")
        p.add_argument("--batches", type=int, help="number of batches")
        p.add_argument("--methods", help="comma-separated subset of SHAP,MDI,DAFI")
        p.add_argument("--workers", type=int, help="explanation fan-out threads")
        p.add_argument(
            "--timing-seed-free",
            action="store_true",
            help="zero timing-derived fields for deterministic snapshots",
        )

    run_p = sub.add_parser("run", help="run the full experiment protocol")
    add_config_flags(run_p)

    val_p = sub.add_parser("validate", help="check a config without running")
    add_config_flags(val_p)

    bench_p = sub.add_parser("bench", help="scaling sweeps on synthetic data")
    bench_p.add_argument("--features", help="comma-separated feature counts")
    bench_p.add_argument("--trees", help="comma-separated tree counts")
    bench_p.add_argument("--bench-trees", type=int, default=10,
                         help="tree count used during the feature sweep")
    bench_p.add_argument("--bench-features", type=int, default=3,
                         help="feature count used during the tree sweep")
    bench_p.add_argument("--instances", type=int, default=1500)
    bench_p.add_argument("--samples", type=int, default=20)
    bench_p.add_argument("--seed", type=int, default=42)
    bench_p.add_argument("--out", default="out")
    return parser


def _config_from_args(args: argparse.Namespace) -> RunConfig:
    config = RunConfig.from_file(args.config) if args.config else RunConfig()
    config.apply_overrides(args)
    return config


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        if args.command == "run":
            return cmd_run(_config_from_args(args))
        if args.command == "validate":
            return cmd_validate(_config_from_args(args))
        return cmd_bench(args)
    except DriftFiError as err:
        if args.error_json:
            print(
                json.dumps({"error": type(err).__name__, "message": str(err)}),
                file=sys.stderr,
            )
        else:
            print(f"error: {err}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
