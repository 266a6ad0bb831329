"""Dataset schemas, CSV ingestion, and synthetic stream generators.

Schemas declare the ordered numeric feature columns, the label column
and its binary encoding, and the default feature arrival schedule
(three features from the start, one more at epoch 10, two more at
epoch 20). Rows with missing values in active features are dropped and
counted rather than imputed.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from typing import Iterable, Iterator, Sequence

import numpy as np

from .errors import ConfigError, IngestionError
from .forest import Instance

_MISSING_MARKERS = {"", "na", "n/a", "nan", "null", "none", "?"}


@dataclass
class DatasetSchema:
    """Ordered column layout and label encoding of one dataset."""

    name: str
    features: list[str]
    label: str
    label_map: dict[str, int]
    feature_schedule: list[tuple[int, list[str]]] = field(default_factory=list)

    def __post_init__(self):
        if self.label in self.features:
            raise ConfigError("label column cannot also be a feature")
        if len(set(self.features)) != len(self.features):
            raise ConfigError("duplicate feature column in schema")
        if not self.feature_schedule:
            self.feature_schedule = default_schedule(self.features)
        scheduled = [f for _, group in self.feature_schedule for f in group]
        unknown = [f for f in scheduled if f not in self.features]
        if unknown:
            raise ConfigError(f"scheduled features not in schema: {unknown}")

    def active_features(self, epoch: int) -> list[str]:
        """Features available at the given epoch, in schema order."""
        live = {
            f
            for start, group in self.feature_schedule
            if start <= epoch
            for f in group
        }
        return [f for f in self.features if f in live]

    def encode_label(self, raw: str) -> int:
        try:
            return self.label_map[raw]
        except KeyError:
            raise IngestionError(f"unknown label value {raw!r}") from None

    def decode_label(self, label: int) -> str:
        for raw, encoded in self.label_map.items():
            if encoded == label:
                return raw
        return str(label)

    def as_dict(self) -> dict:
        return {
            "name": self.name,
            "features": list(self.features),
            "label": self.label,
            "label_map": dict(self.label_map),
            "feature_schedule": [[e, list(g)] for e, g in self.feature_schedule],
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "DatasetSchema":
        return cls(
            name=doc["name"],
            features=list(doc["features"]),
            label=doc["label"],
            label_map={k: int(v) for k, v in doc["label_map"].items()},
            feature_schedule=[(int(e), list(g)) for e, g in doc.get("feature_schedule", [])],
        )

    @classmethod
    def from_json_file(cls, path) -> "DatasetSchema":
        with open(path, encoding="utf-8") as fh:
            return cls.from_dict(json.load(fh))


def default_schedule(features: Sequence[str]) -> list[tuple[int, list[str]]]:
    """Start with three features, add one at epoch 10 and two at 20."""
    schedule = [(0, list(features[:3]))]
    if len(features) > 3:
        schedule.append((10, list(features[3:4])))
    if len(features) > 4:
        schedule.append((20, list(features[4:6])))
    if len(features) > 6:
        schedule.append((20, list(features[6:])))  # anything extra joins last
    return schedule


ELECTRICITY = DatasetSchema(
    name="electricity",
    features=["period", "transfer", "nswprice", "vicprice", "vicdemand", "nswdemand"],
    label="class",
    label_map={"UP": 1, "DOWN": 0},
)

WEATHER = DatasetSchema(
    name="weather",
    features=["MinTemp", "WindGustSpeed", "Evaporation", "MaxTemp", "Rainfall", "Sunshine"],
    label="RainTomorrow",
    label_map={"Yes": 1, "No": 0},
)

NETWORK = DatasetSchema(
    name="network",
    features=[
        "mac_dl_mcs",
        "phy_ul_pusch_sinr",
        "phy_ul_pucch_sinr",
        "phy_ul_pusch_rssi",
        "mac_dl_cqi",
        "phy_ul_pucch_rssi",
    ],
    label="mob_pattern",
    label_map={"Attack": 1, "Benign": 0},
)

BUILTIN_SCHEMAS = {s.name: s for s in (ELECTRICITY, WEATHER, NETWORK)}


class CsvStream:
    """Single-pass iterator over a CSV file checked against a schema.

    Rows with missing values (empty cells or NA markers, including
    non-finite numerics) in the schema's features or label are dropped
    and counted in ``dropped``.
    """

    def __init__(self, path, schema: DatasetSchema):
        self.path = path
        self.schema = schema
        self.dropped = 0
        self.loaded = 0

    def __iter__(self) -> Iterator[Instance]:
        with open(self.path, newline="", encoding="utf-8") as fh:
            reader = csv.reader(fh)
            try:
                header = next(reader)
            except StopIteration:
                raise IngestionError("file has no header row") from None
            columns = {name: i for i, name in enumerate(header)}
            needed = self.schema.features + [self.schema.label]
            missing = [c for c in needed if c not in columns]
            if missing:
                raise IngestionError(f"columns absent from header: {missing}")
            feature_idx = [(f, columns[f]) for f in self.schema.features]
            label_idx = columns[self.schema.label]
            for row_no, row in enumerate(reader, start=2):
                instance = self._parse(row, row_no, feature_idx, label_idx)
                if instance is None:
                    self.dropped += 1
                    continue
                self.loaded += 1
                yield instance

    def _parse(self, row, row_no, feature_idx, label_idx) -> Instance | None:
        features: dict[str, float] = {}
        for name, i in feature_idx:
            try:
                cell = row[i].strip()
            except IndexError:
                raise IngestionError("row has too few columns", row=row_no) from None
            if cell.lower() in _MISSING_MARKERS:
                return None
            try:
                value = float(cell)
            except ValueError:
                raise IngestionError(
                    f"column {name!r} has non-numeric value {cell!r}", row=row_no
                ) from None
            if not math.isfinite(value):
                return None
            features[name] = value
        raw_label = row[label_idx].strip()
        if raw_label.lower() in _MISSING_MARKERS:
            return None
        try:
            label = self.schema.encode_label(raw_label)
        except IngestionError as err:
            raise IngestionError(str(err), row=row_no) from None
        return Instance(features=features, label=label)


def load_csv(path, schema: DatasetSchema) -> CsvStream:
    """Stream a CSV file as labeled instances in file order."""
    return CsvStream(path, schema)


def write_csv(instances: Iterable[Instance], path, schema: DatasetSchema) -> None:
    """Serialize instances to CSV with the schema's columns; floats use
    repr so finite values round-trip bit-exactly."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(schema.features + [schema.label])
        for inst in instances:
            row = [repr(inst.features[f]) for f in schema.features]
            row.append(schema.decode_label(inst.label))
            writer.writerow(row)


@dataclass
class SyntheticSpec:
    """Deterministic synthetic stream description.

    ``kind`` is "threshold_sum" (uniform features, label set by whether
    two designated features sum past a concept-specific threshold, the
    concept switching abruptly at each drift point) or "gaussian_drift"
    (per-segment Gaussian feature means that jump at each drift point,
    same sum-threshold labels). ``noise`` flips labels independently.
    """

    kind: str = "threshold_sum"
    n_instances: int = 1000
    n_features: int = 3
    relevant: tuple[int, int] = (0, 1)
    drift_points: tuple[int, ...] = ()
    noise: float = 0.0
    seed: int = 42
    feature_names: list[str] | None = None
    thresholds: tuple[float, ...] = (8.0, 9.0, 7.0, 9.5)
    mean_jump: float = 1.5
    label_name: str = "label"

    def __post_init__(self):
        if self.kind not in ("threshold_sum", "gaussian_drift"):
            raise ConfigError(f"unknown generator kind {self.kind!r}")
        if self.n_features < 2:
            raise ConfigError("need at least two features")
        if any(i >= self.n_features for i in self.relevant):
            raise ConfigError("relevant feature index out of range")
        if list(self.drift_points) != sorted(set(self.drift_points)):
            raise ConfigError("drift points must be strictly increasing")
        if not 0.0 <= self.noise < 1.0:
            raise ConfigError("noise must lie in [0, 1)")
        if self.feature_names is None:
            self.feature_names = [f"f{i}" for i in range(self.n_features)]
        elif len(self.feature_names) != self.n_features:
            raise ConfigError("feature_names length must match n_features")

    def schema(self) -> DatasetSchema:
        return DatasetSchema(
            name=f"synthetic-{self.kind}",
            features=list(self.feature_names),
            label=self.label_name,
            label_map={"0": 0, "1": 1},
        )


def generate(spec: SyntheticSpec) -> list[Instance]:
    """Materialize the stream described by the spec."""
    rng = np.random.default_rng(spec.seed)
    segments = _segment_of_each(spec)
    names = spec.feature_names
    r1, r2 = spec.relevant
    instances: list[Instance] = []
    if spec.kind == "threshold_sum":
        values = rng.uniform(0.0, 10.0, size=(spec.n_instances, spec.n_features))
        for i in range(spec.n_instances):
            thr = spec.thresholds[segments[i] % len(spec.thresholds)]
            label = int(values[i, r1] + values[i, r2] > thr)
            instances.append(_make(names, values[i], label))
    else:
        n_segments = len(spec.drift_points) + 1
        base = rng.uniform(2.0, 8.0, size=spec.n_features)
        jumps = rng.choice([-spec.mean_jump, spec.mean_jump], size=(n_segments, spec.n_features))
        jumps[0] = 0.0
        means = base + np.cumsum(jumps, axis=0)
        values = rng.normal(0.0, 1.0, size=(spec.n_instances, spec.n_features))
        for i in range(spec.n_instances):
            mu = means[segments[i]]
            row = values[i] + mu
            label = int(row[r1] + row[r2] > mu[r1] + mu[r2])
            instances.append(_make(names, row, label))
    if spec.noise > 0.0:
        flips = rng.random(spec.n_instances) < spec.noise
        for inst, flip in zip(instances, flips):
            if flip:
                inst.label = 1 - inst.label
    return instances


def _segment_of_each(spec: SyntheticSpec) -> list[int]:
    segments = []
    seg = 0
    points = list(spec.drift_points)
    for i in range(spec.n_instances):
        while points and i >= points[0]:
            points.pop(0)
            seg += 1
        segments.append(seg)
    return segments


def _make(names: Sequence[str], row: np.ndarray, label: int) -> Instance:
    return Instance(
        features={name: float(v) for name, v in zip(names, row)},
        label=label,
    )


def mask_features(
    stream: Iterable[Instance], active: Sequence[str]
) -> Iterator[Instance]:
    """Restrict every instance to the active features (label untouched)."""
    active = list(active)
    if not active:
        raise ConfigError("active feature set cannot be empty")
    for inst in stream:
        yield Instance(
            features={f: inst.features[f] for f in active if f in inst.features},
            label=inst.label,
        )
