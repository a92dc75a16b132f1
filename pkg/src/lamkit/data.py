"""Dataset ingestion, feature/subscale configuration, and stratified CV splits.

The on-disk inputs are a plain CSV (header row, UTF-8, ``.`` decimals) and a
JSON config describing, per feature, the monotone direction (-1/0/1), special
values, the bin budget, plus a top-level subscale partition and a global
``special_value_threshold`` below which values are treated as sentinels.
"""

from __future__ import annotations

import csv
import enum
import json
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import DataValidationError


class Monotone(enum.IntEnum):
    """Constraint direction of a feature (or encoded column).

    Integer values match the config convention: -1 decreasing, 0 free,
    1 increasing.
    """

    DECREASING = -1
    UNCONSTRAINED = 0
    INCREASING = 1


@dataclass(frozen=True)
class FeatureSpec:
    """Per-feature modelling directives.

    ``special_values`` are sentinel encodings (e.g. -9 for "not available")
    that are one-hot encoded rather than binned. ``max_leaves`` bounds the
    number of bins produced for a continuous feature. ``lower_bound`` is the
    smallest regular value; when ``None`` the dataset-level special-value
    threshold is used.
    """

    name: str
    monotone: Monotone = Monotone.UNCONSTRAINED
    special_values: tuple[float, ...] = ()
    max_leaves: int = 5
    categorical: bool = False
    lower_bound: float | None = None

    def __post_init__(self) -> None:
        object.__setattr__(self, "monotone", Monotone(self.monotone))
        object.__setattr__(
            self, "special_values", tuple(float(v) for v in self.special_values)
        )
        if self.categorical and self.monotone is not Monotone.UNCONSTRAINED:
            raise DataValidationError(
                f"feature {self.name!r}: categorical features must be unconstrained"
            )
        if not self.categorical and self.max_leaves < 2:
            raise DataValidationError(
                f"feature {self.name!r}: max_leaves must be >= 2 for continuous features"
            )


@dataclass(frozen=True)
class SubscaleSpec:
    """Named groups of features forming a partition of the feature set."""

    groups: dict[str, tuple[str, ...]]

    def __post_init__(self) -> None:
        object.__setattr__(
            self,
            "groups",
            {str(k): tuple(str(f) for f in v) for k, v in self.groups.items()},
        )

    @property
    def names(self) -> tuple[str, ...]:
        return tuple(self.groups)

    def validate_partition(self, feature_names: tuple[str, ...]) -> None:
        """Raise unless the groups are disjoint and cover exactly the features."""
        seen: dict[str, str] = {}
        for group, members in self.groups.items():
            for f in members:
                if f in seen:
                    raise DataValidationError(
                        f"subscale partition violation: feature {f!r} appears in "
                        f"both {seen[f]!r} and {group!r}"
                    )
                seen[f] = group
        missing = [f for f in feature_names if f not in seen]
        if missing:
            raise DataValidationError(
                f"subscale partition violation: features not assigned to any "
                f"subscale: {missing}"
            )
        extra = [f for f in seen if f not in feature_names]
        if extra:
            raise DataValidationError(
                f"subscale partition violation: unknown features in subscales: {extra}"
            )


@dataclass(frozen=True)
class Dataset:
    """A validated numeric matrix with binary labels.

    Arrays are made read-only on construction; instances are safe to share
    across threads.
    """

    features: np.ndarray
    labels: np.ndarray
    feature_names: tuple[str, ...]
    categorical_mask: tuple[bool, ...]

    def __post_init__(self) -> None:
        X = np.ascontiguousarray(np.asarray(self.features, dtype=np.float64))
        y = np.asarray(self.labels)
        if X.ndim != 2:
            raise DataValidationError("features must be a 2-D matrix")
        if X.shape[0] < 1 or X.shape[1] < 1:
            raise DataValidationError("dataset must have at least one row and one feature")
        if y.shape != (X.shape[0],):
            raise DataValidationError("labels must be a vector matching the row count")
        if not np.all((y == 0) | (y == 1)):
            raise DataValidationError("label outside {0,1}")
        if np.isnan(X).any():
            raise DataValidationError("NaN in feature matrix after special-value substitution")
        names = tuple(str(n) for n in self.feature_names)
        if len(names) != X.shape[1]:
            raise DataValidationError("feature_names length does not match column count")
        if len(set(names)) != len(names):
            raise DataValidationError("feature names must be unique")
        mask = tuple(bool(b) for b in self.categorical_mask)
        if len(mask) != X.shape[1]:
            raise DataValidationError("categorical_mask length does not match column count")
        y = y.astype(np.int64)
        X.setflags(write=False)
        y.setflags(write=False)
        object.__setattr__(self, "features", X)
        object.__setattr__(self, "labels", y)
        object.__setattr__(self, "feature_names", names)
        object.__setattr__(self, "categorical_mask", mask)

    @property
    def n_rows(self) -> int:
        return self.features.shape[0]

    @property
    def n_features(self) -> int:
        return self.features.shape[1]

    def subset_rows(self, indices: np.ndarray) -> "Dataset":
        """Row slice sharing names and categorical flags."""
        idx = np.asarray(indices)
        return Dataset(
            self.features[idx], self.labels[idx], self.feature_names, self.categorical_mask
        )

    def select_features(self, names: tuple[str, ...]) -> "Dataset":
        """Column slice in the given order."""
        pos = {n: i for i, n in enumerate(self.feature_names)}
        try:
            cols = [pos[n] for n in names]
        except KeyError as exc:
            raise DataValidationError(f"unknown feature {exc.args[0]!r}") from None
        return Dataset(
            self.features[:, cols],
            self.labels,
            tuple(names),
            tuple(self.categorical_mask[c] for c in cols),
        )


@dataclass(frozen=True)
class DatasetConfig:
    """Parsed contents of a dataset config file."""

    features: tuple[FeatureSpec, ...]
    subscales: SubscaleSpec
    special_value_threshold: float = float("-inf")

    @property
    def feature_names(self) -> tuple[str, ...]:
        return tuple(s.name for s in self.features)

    def spec_for(self, name: str) -> FeatureSpec:
        for s in self.features:
            if s.name == name:
                return s
        raise DataValidationError(f"no feature spec for column {name!r}")

    @classmethod
    def from_dict(cls, raw: dict) -> "DatasetConfig":
        if "features" not in raw or not isinstance(raw["features"], dict):
            raise DataValidationError("config must contain a 'features' object")
        threshold = float(raw.get("special_value_threshold", float("-inf")))
        categorical = set(raw.get("categorical", ()))
        specs = []
        for name, entry in raw["features"].items():
            entry = dict(entry or {})
            is_cat = bool(entry.pop("categorical", name in categorical)) or name in categorical
            monotone = int(entry.pop("monotone", 0))
            if monotone not in (-1, 0, 1):
                raise DataValidationError(
                    f"feature {name!r}: monotone must be -1, 0 or 1, got {monotone}"
                )
            specs.append(
                FeatureSpec(
                    name=name,
                    monotone=Monotone(monotone),
                    special_values=tuple(entry.pop("special_values", ())),
                    max_leaves=int(entry.pop("max_leaves", 5)),
                    categorical=is_cat,
                    lower_bound=entry.pop("lower_bound", None),
                )
            )
            if entry:
                raise DataValidationError(
                    f"feature {name!r}: unknown config keys {sorted(entry)}"
                )
        names = tuple(s.name for s in specs)
        subscales = SubscaleSpec(
            {k: tuple(v) for k, v in raw.get("subscales", {"all": list(names)}).items()}
        )
        subscales.validate_partition(names)
        return cls(tuple(specs), subscales, threshold)

    def to_dict(self) -> dict:
        return {
            "special_value_threshold": self.special_value_threshold,
            "features": {
                s.name: {
                    "monotone": int(s.monotone),
                    "special_values": list(s.special_values),
                    "max_leaves": s.max_leaves,
                    "categorical": s.categorical,
                    **({"lower_bound": s.lower_bound} if s.lower_bound is not None else {}),
                }
                for s in self.features
            },
            "subscales": {k: list(v) for k, v in self.subscales.groups.items()},
        }


def load_config(path: str) -> DatasetConfig:
    """Read and validate a JSON dataset config."""
    with open(path, "r", encoding="utf-8") as fh:
        try:
            raw = json.load(fh)
        except json.JSONDecodeError as exc:
            raise DataValidationError(f"config {path}: invalid JSON ({exc})") from None
    return DatasetConfig.from_dict(raw)


def load_csv(path: str, config: DatasetConfig, label_column: str = "target") -> Dataset:
    """Parse a CSV file into a validated :class:`Dataset`.

    The header must contain exactly the configured features plus the label
    column (any order). Empty or NaN cells are replaced by the feature's
    first configured special value; features without special values reject
    missing cells.
    """
    with open(path, "r", encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise DataValidationError(f"{path}: empty file") from None
        rows = list(reader)

    expected = set(config.feature_names) | {label_column}
    got = set(header)
    if len(header) != len(got):
        raise DataValidationError(f"{path}: duplicate column names in header")
    if label_column not in got:
        raise DataValidationError(f"{path}: missing label column {label_column!r}")
    missing = sorted(expected - got)
    if missing:
        raise DataValidationError(f"{path}: missing columns {missing}")
    extra = sorted(got - expected)
    if extra:
        raise DataValidationError(f"{path}: columns not covered by the config: {extra}")

    col_of = {name: header.index(name) for name in header}
    label_idx = col_of[label_column]
    n = len(rows)
    if n == 0:
        raise DataValidationError(f"{path}: no data rows")

    d = len(config.feature_names)
    X = np.empty((n, d), dtype=np.float64)
    y = np.empty(n, dtype=np.int64)
    for r, row in enumerate(rows):
        if len(row) != len(header):
            raise DataValidationError(f"{path}: row {r + 2} has {len(row)} cells, expected {len(header)}")
        cell = row[label_idx].strip()
        try:
            lv = float(cell)
        except ValueError:
            raise DataValidationError(
                f"{path}: row {r + 2}: non-numeric label {cell!r}"
            ) from None
        if lv not in (0.0, 1.0):
            raise DataValidationError(f"{path}: row {r + 2}: label outside {{0,1}}: {cell}")
        y[r] = int(lv)
        for j, spec in enumerate(config.features):
            cell = row[col_of[spec.name]].strip()
            if cell == "":
                value = math.nan
            else:
                try:
                    value = float(cell)
                except ValueError:
                    raise DataValidationError(
                        f"{path}: row {r + 2}, column {spec.name!r}: "
                        f"non-numeric cell {cell!r}"
                    ) from None
            if math.isnan(value):
                if spec.special_values:
                    value = spec.special_values[0]
                else:
                    raise DataValidationError(
                        f"{path}: row {r + 2}, column {spec.name!r}: missing value and "
                        f"no special values configured"
                    )
            X[r, j] = value

    if not (np.any(y == 0) and np.any(y == 1)):
        raise DataValidationError(f"{path}: both classes must be present")
    config.subscales.validate_partition(config.feature_names)
    return Dataset(
        features=X,
        labels=y,
        feature_names=config.feature_names,
        categorical_mask=tuple(s.categorical for s in config.features),
    )


def dataset_to_csv(ds: Dataset, path: str, label_column: str = "target") -> None:
    """Write a dataset back to CSV; floats use shortest round-trip formatting."""
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(list(ds.feature_names) + [label_column])
        for i in range(ds.n_rows):
            writer.writerow(
                [repr(float(v)) for v in ds.features[i]] + [int(ds.labels[i])]
            )


@dataclass(frozen=True)
class FoldPlan:
    """Stratified fold assignments, reproducible from the seed."""

    k: int
    assignments: np.ndarray
    seed: int

    def __post_init__(self) -> None:
        a = np.asarray(self.assignments, dtype=np.int64)
        a.setflags(write=False)
        object.__setattr__(self, "assignments", a)

    def test_indices(self, fold: int) -> np.ndarray:
        return np.flatnonzero(self.assignments == fold)

    def train_indices(self, fold: int) -> np.ndarray:
        return np.flatnonzero(self.assignments != fold)


def stratified_kfold(ds: Dataset, k: int, seed: int) -> FoldPlan:
    """Assign rows to k folds with per-class counts balanced to within one.

    Indices are shuffled within each class using the seed, then dealt
    round-robin, so equal seeds give identical plans.
    """
    if k < 2:
        raise DataValidationError(f"fold count must be >= 2, got {k}")
    y = ds.labels
    rng = np.random.default_rng(seed)
    assignments = np.empty(ds.n_rows, dtype=np.int64)
    for cls in (0, 1):
        idx = np.flatnonzero(y == cls)
        if len(idx) < k:
            raise DataValidationError(
                f"class {cls} has only {len(idx)} rows; need at least k={k}"
            )
        perm = rng.permutation(idx)
        assignments[perm] = np.arange(len(perm)) % k
    return FoldPlan(k=k, assignments=assignments, seed=seed)


def row_range_split(ds: Dataset, ranges: list[tuple[int, int]]) -> list[Dataset]:
    """Cut a dataset into contiguous row ranges (half-open, in row order).

    Intended for corpora shipped as one large temporally ordered file that
    should be evaluated as several independent datasets.
    """
    out = []
    for lo, hi in ranges:
        if not (0 <= lo < hi <= ds.n_rows):
            raise DataValidationError(
                f"invalid row range [{lo}, {hi}) for {ds.n_rows} rows"
            )
        out.append(ds.subset_rows(np.arange(lo, hi)))
    return out
