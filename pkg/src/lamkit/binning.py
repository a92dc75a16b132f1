"""Supervised discretisation and monotone indicator encoding.

Continuous features are cut by greedy best-first binary splits maximising
information gain of the label (equivalent to a depth-unlimited decision
stump cascade with a fixed leaf budget). The fitted edges are then turned
into 0/1 indicator columns whose direction depends on the feature's
monotone constraint:

* decreasing features emit half-line indicators ``1{v <= theta}``,
* increasing features emit ``1{v >= theta}``,
* unconstrained features emit one-hot two-sided bins ``1{a < v <= b}``.

All half-line indicator columns are monotone in the declared direction and
are marked ``Monotone.INCREASING`` so a nonnegative coefficient downstream
preserves the raw-feature constraint. Categorical levels and special values
are one-hot encoded as free columns.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass

import numpy as np

from .data import Dataset, FeatureSpec, Monotone
from .errors import DataValidationError

_GAIN_TIE_TOL = 1e-12


class BinMode(str, enum.Enum):
    LEFT_HALF = "left_half"      # 1{v <= theta}, for monotone decreasing features
    RIGHT_HALF = "right_half"    # 1{v >= theta}, for monotone increasing features
    TWO_SIDED = "two_sided"      # one-hot interval membership, unconstrained
    CATEGORICAL = "categorical"  # one-hot levels


@dataclass(frozen=True)
class ColumnMeta:
    """Provenance of one encoded column, used for attributions."""

    name: str
    source: str
    kind: str  # "interval", "level" or "special"
    direction: Monotone


@dataclass(frozen=True)
class FeatureEncoding:
    """Fitted encoding of a single raw feature."""

    name: str
    mode: BinMode
    edges: tuple[float, ...]          # interior thresholds, ascending
    special_values: tuple[float, ...]
    levels: tuple[float, ...]         # categorical levels, ascending
    lower_bound: float                # values below are treated as special

    def _is_special(self, v: np.ndarray) -> np.ndarray:
        mask = v < self.lower_bound
        for sv in self.special_values:
            mask = mask | (v == sv)
        return mask

    def interval_columns(self) -> list[ColumnMeta]:
        cols: list[ColumnMeta] = []
        if self.mode is BinMode.LEFT_HALF:
            for e in self.edges:
                cols.append(ColumnMeta(f"{self.name}<={e:g}", self.name, "interval",
                                       Monotone.INCREASING))
            cols.append(ColumnMeta(f"{self.name}<=inf", self.name, "interval",
                                   Monotone.INCREASING))
        elif self.mode is BinMode.RIGHT_HALF:
            for e in reversed(self.edges):
                cols.append(ColumnMeta(f"{self.name}>={e:g}", self.name, "interval",
                                       Monotone.INCREASING))
            lo = self.lower_bound
            tag = f"{lo:g}" if math.isfinite(lo) else "-inf"
            cols.append(ColumnMeta(f"{self.name}>={tag}", self.name, "interval",
                                   Monotone.INCREASING))
        elif self.mode is BinMode.TWO_SIDED:
            bounds = (-math.inf, *self.edges, math.inf)
            for a, b in zip(bounds[:-1], bounds[1:]):
                cols.append(ColumnMeta(f"{self.name}in({a:g},{b:g}]", self.name,
                                       "interval", Monotone.UNCONSTRAINED))
        else:
            for lv in self.levels:
                cols.append(ColumnMeta(f"{self.name}=={lv:g}", self.name, "level",
                                       Monotone.UNCONSTRAINED))
        return cols

    def columns(self) -> list[ColumnMeta]:
        cols = self.interval_columns()
        for sv in self.special_values:
            cols.append(ColumnMeta(f"{self.name}==special({sv:g})", self.name,
                                   "special", Monotone.UNCONSTRAINED))
        return cols

    def encode(self, values: np.ndarray) -> np.ndarray:
        """Encode a vector of raw values into the 0/1 block for this feature."""
        v = np.asarray(values, dtype=np.float64)
        special = self._is_special(v)
        regular = ~special
        blocks: list[np.ndarray] = []
        if self.mode is BinMode.LEFT_HALF:
            for e in self.edges:
                blocks.append(regular & (v <= e))
            blocks.append(regular.copy())  # the implicit v <= +inf boundary
        elif self.mode is BinMode.RIGHT_HALF:
            for e in reversed(self.edges):
                blocks.append(regular & (v >= e))
            if math.isfinite(self.lower_bound):
                blocks.append(regular & (v >= self.lower_bound))
            else:
                blocks.append(regular.copy())
        elif self.mode is BinMode.TWO_SIDED:
            bounds = (-math.inf, *self.edges, math.inf)
            for a, b in zip(bounds[:-1], bounds[1:]):
                inside = (v > a) & (v <= b) if math.isfinite(b) else (v > a)
                blocks.append(regular & inside)
        else:
            for lv in self.levels:
                blocks.append(regular & (v == lv))
        for sv in self.special_values:
            blocks.append(v == sv)
        return np.stack(blocks, axis=-1).astype(np.float64)

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "mode": self.mode.value,
            "edges": list(self.edges),
            "special_values": list(self.special_values),
            "levels": list(self.levels),
            "lower_bound": self.lower_bound,
        }

    @classmethod
    def from_dict(cls, raw: dict) -> "FeatureEncoding":
        return cls(
            name=raw["name"],
            mode=BinMode(raw["mode"]),
            edges=tuple(raw["edges"]),
            special_values=tuple(raw["special_values"]),
            levels=tuple(raw["levels"]),
            lower_bound=float(raw["lower_bound"]),
        )


@dataclass(frozen=True)
class BinningTransform:
    """Fitted per-feature encodings plus flattened column metadata."""

    entries: tuple[FeatureEncoding, ...]

    @property
    def columns(self) -> tuple[ColumnMeta, ...]:
        return tuple(c for e in self.entries for c in e.columns())

    @property
    def column_names(self) -> tuple[str, ...]:
        return tuple(c.name for c in self.columns)

    @property
    def column_directions(self) -> tuple[Monotone, ...]:
        return tuple(c.direction for c in self.columns)

    def transform(self, X: np.ndarray) -> np.ndarray:
        X = np.asarray(X, dtype=np.float64)
        if X.ndim == 1:
            X = X[None, :]
        if X.shape[1] != len(self.entries):
            raise DataValidationError(
                f"expected {len(self.entries)} raw features, got {X.shape[1]}"
            )
        return np.concatenate(
            [e.encode(X[:, j]) for j, e in enumerate(self.entries)], axis=1
        )

    def to_dict(self) -> dict:
        return {"features": [e.to_dict() for e in self.entries]}

    @classmethod
    def from_dict(cls, raw: dict) -> "BinningTransform":
        return cls(tuple(FeatureEncoding.from_dict(e) for e in raw["features"]))


def _entropy(pos: float, n: float) -> float:
    """Label entropy (nats) of a group with `pos` positives out of `n`."""
    if n <= 0 or pos <= 0 or pos >= n:
        return 0.0
    p = pos / n
    return -(p * math.log(p) + (1.0 - p) * math.log(1.0 - p))


def fit_edges(values: np.ndarray, labels: np.ndarray, max_leaves: int) -> np.ndarray:
    """Choose interior bin thresholds by greedy information-gain splitting.

    Thresholds sit at midpoints of adjacent distinct values. Splitting is
    best-first over all current leaves, stops once `max_leaves` leaves exist
    or no split has positive gain, and breaks gain ties toward the smaller
    threshold. Returns the sorted interior thresholds (possibly empty for a
    constant feature). Callers must exclude special values beforehand.
    """
    v = np.asarray(values, dtype=np.float64)
    y = np.asarray(labels, dtype=np.float64)
    if v.shape != y.shape or v.ndim != 1:
        raise DataValidationError("values and labels must be matching vectors")
    if max_leaves < 2:
        raise DataValidationError("max_leaves must be >= 2")
    order = np.argsort(v, kind="stable")
    v, y = v[order], y[order]
    distinct, starts = np.unique(v, return_index=True)
    n_blocks = len(distinct)
    if n_blocks < 2:
        return np.empty(0, dtype=np.float64)
    counts = np.diff(np.append(starts, len(v))).astype(np.float64)
    pos = np.add.reduceat(y, starts)
    cum_n = np.concatenate([[0.0], np.cumsum(counts)])
    cum_p = np.concatenate([[0.0], np.cumsum(pos)])

    def group(lo: int, hi: int) -> tuple[float, float]:
        # blocks lo..hi-1 inclusive of samples
        return cum_p[hi] - cum_p[lo], cum_n[hi] - cum_n[lo]

    def best_split(lo: int, hi: int) -> tuple[float, float, int] | None:
        """Best (gain, threshold, block) within leaf [lo, hi).

        Gain is count-weighted (so competing leaves are comparable) and ties
        keep the first, i.e. smallest, threshold.
        """
        p_all, n_all = group(lo, hi)
        h_parent = n_all * _entropy(p_all, n_all)
        best: tuple[float, float, int] | None = None
        for t in range(lo, hi - 1):
            p_l, n_l = group(lo, t + 1)
            p_r, n_r = group(t + 1, hi)
            gain = h_parent - n_l * _entropy(p_l, n_l) - n_r * _entropy(p_r, n_r)
            thr = 0.5 * (distinct[t] + distinct[t + 1])
            if best is None or gain > best[0] + _GAIN_TIE_TOL:
                best = (gain, thr, t)
        return best

    leaves: list[tuple[int, int]] = [(0, n_blocks)]
    candidates: dict[tuple[int, int], tuple[float, float, int] | None] = {
        leaves[0]: best_split(0, n_blocks)
    }
    edges: list[float] = []
    while len(leaves) < max_leaves:
        chosen: tuple[int, int] | None = None
        chosen_gain, chosen_thr, chosen_t = -1.0, math.inf, -1
        for leaf in leaves:
            cand = candidates[leaf]
            if cand is None:
                continue
            gain, thr, t = cand
            if gain > chosen_gain + _GAIN_TIE_TOL or (
                gain > chosen_gain - _GAIN_TIE_TOL and thr < chosen_thr
            ):
                chosen, chosen_gain, chosen_thr, chosen_t = leaf, gain, thr, t
        if chosen is None or chosen_gain <= _GAIN_TIE_TOL:
            break
        lo, hi = chosen
        left, right = (lo, chosen_t + 1), (chosen_t + 1, hi)
        leaves.remove(chosen)
        del candidates[chosen]
        leaves.extend([left, right])
        candidates[left] = best_split(*left) if left[1] - left[0] > 1 else None
        candidates[right] = best_split(*right) if right[1] - right[0] > 1 else None
        edges.append(chosen_thr)
    return np.asarray(sorted(edges), dtype=np.float64)


def _mode_for(spec: FeatureSpec) -> BinMode:
    if spec.categorical:
        return BinMode.CATEGORICAL
    if spec.monotone is Monotone.DECREASING:
        return BinMode.LEFT_HALF
    if spec.monotone is Monotone.INCREASING:
        return BinMode.RIGHT_HALF
    return BinMode.TWO_SIDED


def fit_feature(
    values: np.ndarray,
    labels: np.ndarray,
    spec: FeatureSpec,
    special_value_threshold: float = float("-inf"),
) -> FeatureEncoding:
    """Fit the encoding of one feature, excluding special values."""
    lower = spec.lower_bound if spec.lower_bound is not None else special_value_threshold
    v = np.asarray(values, dtype=np.float64)
    special = v < lower
    for sv in spec.special_values:
        special = special | (v == sv)
    regular_v, regular_y = v[~special], np.asarray(labels)[~special]
    if spec.categorical:
        levels = tuple(np.unique(regular_v).tolist())
        edges: tuple[float, ...] = ()
    else:
        levels = ()
        if len(np.unique(regular_v)) < 2:
            edges = ()  # constant feature: single degenerate bin
        else:
            edges = tuple(fit_edges(regular_v, regular_y, spec.max_leaves).tolist())
    return FeatureEncoding(
        name=spec.name,
        mode=_mode_for(spec),
        edges=edges,
        special_values=spec.special_values,
        levels=levels,
        lower_bound=float(lower),
    )


def fit_transform(
    ds: Dataset,
    specs: list[FeatureSpec] | tuple[FeatureSpec, ...],
    special_value_threshold: float = float("-inf"),
) -> tuple[BinningTransform, np.ndarray]:
    """Fit encodings for every feature and return the encoded 0/1 matrix."""
    by_name = {s.name: s for s in specs}
    missing = [n for n in ds.feature_names if n not in by_name]
    if missing:
        raise DataValidationError(f"no feature specs for columns {missing}")
    entries = []
    for j, name in enumerate(ds.feature_names):
        entries.append(
            fit_feature(ds.features[:, j], ds.labels, by_name[name], special_value_threshold)
        )
    transform = BinningTransform(tuple(entries))
    return transform, transform.transform(ds.features)
