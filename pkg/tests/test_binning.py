"""Supervised discretisation and indicator-encoding tests."""

import numpy as np
import pytest

from lamkit.binning import (
    BinMode,
    BinningTransform,
    FeatureEncoding,
    fit_edges,
    fit_transform,
)
from lamkit.data import Dataset, FeatureSpec, Monotone
from lamkit.errors import DataValidationError

from helpers import exhaustive_split_gains, make_dataset


class TestFitEdges:
    def test_clean_separation_picks_midpoint(self):
        # exhaustive oracle: gain is maximal at the 2/3 boundary
        values = np.array([1.0, 2.0, 3.0, 4.0])
        labels = np.array([0, 0, 1, 1])
        gains = exhaustive_split_gains(values, labels)
        best_thr = max(gains, key=lambda tg: tg[1])[0]
        assert best_thr == 2.5
        edges = fit_edges(values, labels, max_leaves=2)
        assert edges.tolist() == [2.5]

    def test_constant_feature_degenerates(self):
        edges = fit_edges(np.full(8, 3.0), np.array([0, 1] * 4), max_leaves=4)
        assert edges.size == 0

    def test_interleaved_chooses_a_maximal_gain_split(self):
        values = np.array([1.0, 2.0, 3.0, 4.0])
        labels = np.array([0, 1, 0, 1])
        edges = fit_edges(values, labels, max_leaves=2)
        assert edges.size == 1
        gains = dict(exhaustive_split_gains(values, labels))
        chosen = gains[edges[0]]
        assert all(chosen >= g - 1e-12 for g in gains.values())
        # ties break toward the smaller threshold
        tied = [t for t, g in gains.items() if abs(g - chosen) <= 1e-12]
        assert edges[0] == min(tied)

    def test_edge_budget_respected(self):
        rng = np.random.default_rng(4)
        values = rng.normal(size=300)
        labels = (values + rng.normal(scale=0.5, size=300) > 0).astype(int)
        for max_leaves in (2, 3, 5, 8):
            edges = fit_edges(values, labels, max_leaves)
            assert len(edges) <= max_leaves - 1
            assert np.all(np.diff(edges) > 0)

    def test_greedy_first_split_is_globally_best(self):
        rng = np.random.default_rng(9)
        values = rng.normal(size=80)
        labels = (rng.random(80) < 1 / (1 + np.exp(-values))).astype(int)
        edges = fit_edges(values, labels, max_leaves=2)
        gains = exhaustive_split_gains(values, labels)
        best_gain = max(g for _, g in gains)
        assert edges.size == 1
        assert dict(gains)[edges[0]] >= best_gain - 1e-12

    def test_max_leaves_validation(self):
        with pytest.raises(DataValidationError):
            fit_edges(np.array([1.0, 2.0]), np.array([0, 1]), max_leaves=1)


def _entry(mode, edges=(), specials=(), levels=(), lower=float("-inf")):
    return FeatureEncoding(
        name="f",
        mode=mode,
        edges=tuple(edges),
        special_values=tuple(specials),
        levels=tuple(levels),
        lower_bound=lower,
    )


class TestEncode:
    def test_decreasing_half_lines(self):
        entry = _entry(BinMode.LEFT_HALF, edges=[2.0])
        assert entry.encode(np.array([1.0])).tolist() == [[1.0, 1.0]]
        assert entry.encode(np.array([3.0])).tolist() == [[0.0, 1.0]]

    def test_increasing_half_lines(self):
        entry = _entry(BinMode.RIGHT_HALF, edges=[2.0, 5.0], lower=0.0)
        # columns ordered by descending threshold, then the lower boundary
        assert entry.encode(np.array([6.0])).tolist() == [[1.0, 1.0, 1.0]]
        assert entry.encode(np.array([3.0])).tolist() == [[0.0, 1.0, 1.0]]
        assert entry.encode(np.array([1.0])).tolist() == [[0.0, 0.0, 1.0]]

    def test_two_sided_exactly_one_hot(self):
        entry = _entry(BinMode.TWO_SIDED, edges=[0.0, 2.0])
        rng = np.random.default_rng(0)
        values = rng.uniform(-5, 5, size=200)
        enc = entry.encode(values)
        assert enc.shape == (200, 3)
        assert np.all(enc.sum(axis=1) == 1.0)

    def test_special_value_one_hot(self):
        # sentinel pattern: anything below -0.5 is special, -9 is listed
        entry = _entry(BinMode.LEFT_HALF, edges=[2.0], specials=[-9.0], lower=-0.5)
        enc = entry.encode(np.array([-9.0]))[0]
        assert enc.tolist() == [0.0, 0.0, 1.0]

    def test_unlisted_below_threshold_encodes_to_zeros(self):
        entry = _entry(BinMode.LEFT_HALF, edges=[2.0], specials=[-9.0], lower=-0.5)
        enc = entry.encode(np.array([-3.0]))[0]
        assert enc.tolist() == [0.0, 0.0, 0.0]

    def test_categorical_levels_and_unseen(self):
        entry = _entry(BinMode.CATEGORICAL, levels=[1.0, 2.0, 5.0])
        assert entry.encode(np.array([2.0])).tolist() == [[0.0, 1.0, 0.0]]
        assert entry.encode(np.array([7.0])).tolist() == [[0.0, 0.0, 0.0]]


class TestFitTransform:
    def _decreasing_ds(self, m=200, seed=3):
        rng = np.random.default_rng(seed)
        v = rng.uniform(0, 10, size=m)
        # decreasing risk in v
        y = (rng.random(m) < 1 / (1 + np.exp(-(2.0 - 0.5 * v)))).astype(int)
        y[0], y[1] = 0, 1
        return Dataset(v[:, None], y, ("v",), (False,))

    def test_binary_output_and_column_budget(self):
        ds = self._decreasing_ds()
        spec = FeatureSpec("v", Monotone.DECREASING, max_leaves=3)
        transform, encoded = fit_transform(ds, [spec])
        interval_cols = [c for c in transform.columns if c.kind == "interval"]
        assert len(interval_cols) <= 3
        assert set(np.unique(encoded)) <= {0.0, 1.0}
        assert all(c.direction is Monotone.INCREASING for c in interval_cols)

    def test_idempotent_transform(self):
        ds = self._decreasing_ds()
        spec = FeatureSpec("v", Monotone.DECREASING, max_leaves=4)
        transform, encoded = fit_transform(ds, [spec])
        assert np.array_equal(encoded, transform.transform(ds.features))

    def test_monotone_faithfulness_decreasing(self):
        ds = self._decreasing_ds()
        spec = FeatureSpec("v", Monotone.DECREASING, max_leaves=5)
        transform, _ = fit_transform(ds, [spec])
        rng = np.random.default_rng(1)
        for _ in range(300):
            a, b = np.sort(rng.uniform(-2, 12, size=2))
            ea = transform.transform(np.array([[a]]))[0]
            eb = transform.transform(np.array([[b]]))[0]
            assert np.all(ea >= eb)  # componentwise, raw a < b

    def test_monotone_faithfulness_increasing(self):
        ds = self._decreasing_ds()
        spec = FeatureSpec("v", Monotone.INCREASING, max_leaves=5)
        transform, _ = fit_transform(ds, [spec])
        rng = np.random.default_rng(2)
        for _ in range(300):
            a, b = np.sort(rng.uniform(-2, 12, size=2))
            ea = transform.transform(np.array([[a]]))[0]
            eb = transform.transform(np.array([[b]]))[0]
            assert np.all(eb >= ea)

    def test_two_sided_rows_sum_to_one(self):
        ds = make_dataset(m=150, d=2, seed=7)
        specs = [FeatureSpec(n, Monotone.UNCONSTRAINED, max_leaves=4) for n in ds.feature_names]
        transform, encoded = fit_transform(ds, specs)
        for j, name in enumerate(ds.feature_names):
            cols = [i for i, c in enumerate(transform.columns) if c.source == name]
            assert np.all(encoded[:, cols].sum(axis=1) == 1.0)

    def test_special_columns_and_provenance(self):
        rng = np.random.default_rng(5)
        v = rng.uniform(0, 10, size=100)
        v[:10] = -9.0
        y = (rng.random(100) < 0.4).astype(int)
        y[0], y[1] = 0, 1
        ds = Dataset(v[:, None], y, ("v",), (False,))
        spec = FeatureSpec("v", Monotone.DECREASING, special_values=(-9.0,), max_leaves=3)
        transform, encoded = fit_transform(ds, [spec], special_value_threshold=-0.5)
        kinds = [c.kind for c in transform.columns]
        assert kinds.count("special") == 1
        special_col = kinds.index("special")
        assert np.all(encoded[:10, special_col] == 1.0)
        assert np.all(encoded[:10, :special_col] == 0.0)
        # special rows were excluded from edge fitting
        assert all(e > -0.5 for e in transform.entries[0].edges)

    def test_serialization_roundtrip(self):
        ds = make_dataset(m=80, d=3, seed=6, categorical=(2,))
        specs = [
            FeatureSpec("f0", Monotone.DECREASING, special_values=(-7.0,), max_leaves=4),
            FeatureSpec("f1", Monotone.INCREASING, max_leaves=3),
            FeatureSpec("f2", categorical=True),
        ]
        transform, encoded = fit_transform(ds, specs, special_value_threshold=-5.0)
        again = BinningTransform.from_dict(transform.to_dict())
        assert again == transform
        assert np.array_equal(encoded, again.transform(ds.features))

    def test_missing_spec_rejected(self):
        ds = make_dataset(m=20, d=2)
        with pytest.raises(DataValidationError, match="no feature specs"):
            fit_transform(ds, [FeatureSpec("f0")])
