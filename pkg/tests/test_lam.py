"""Clipped-linear link: the special function, the optimal slope, predictions."""

import math
import time

import numpy as np
import pytest

from lamkit.data import Monotone
from lamkit.errors import DataValidationError
from lamkit.glm import AdditiveModel, Link
from lamkit.lam import (
    ALPHA_STAR,
    attribute_lam,
    dilog,
    find_alpha_star,
    linearise,
    predict_lam,
    sigmoid,
    sigmoid_approx,
    squared_error,
)

from helpers import dilog_quadrature, squared_error_quadrature

U = Monotone.UNCONSTRAINED


def _random_model(rng, d):
    return AdditiveModel(
        bias=float(rng.normal(scale=2.0)),
        coefficients=rng.normal(scale=1.5, size=d),
        column_names=tuple(f"c{i}" for i in range(d)),
        column_directions=(U,) * d,
    )


class TestSigmoid:
    def test_midpoint_and_tails(self):
        assert sigmoid(0.0) == 0.5
        assert sigmoid(-40.0) == pytest.approx(0.0, abs=1e-17)
        assert 0.0 < sigmoid(-30.0) < 1e-12
        assert sigmoid(30.0) < 1.0

    def test_symmetry(self):
        rng = np.random.default_rng(0)
        for x in rng.uniform(-50, 50, size=500):
            assert abs(sigmoid(x) + sigmoid(-x) - 1.0) <= 1e-15
        assert sigmoid(2.0) + sigmoid(-2.0) == pytest.approx(1.0, abs=1e-15)

    def test_odds_walkthrough(self):
        # risk 0.1 user, coefficient 1.61: five-fold odds move probability to ~0.357
        start = 0.1
        logit = math.log(start / (1 - start))
        assert sigmoid(logit + 1.61) == pytest.approx(0.357, abs=5e-4)
        # second user at 0.25 ends high-risk at ~0.625
        logit_b = math.log(0.25 / 0.75)
        assert sigmoid(logit_b + 1.61) == pytest.approx(0.625, abs=5e-3)


class TestSigmoidApprox:
    def test_fixed_points(self):
        assert sigmoid_approx(0.0, 1.7) == 0.5
        assert sigmoid_approx(ALPHA_STAR / 2, ALPHA_STAR) == 0.75
        assert sigmoid_approx(-10.0, ALPHA_STAR) == 0.0
        assert sigmoid_approx(10.0, ALPHA_STAR) == 1.0

    def test_continuity_at_the_clip_boundaries(self):
        for alpha in (0.5, ALPHA_STAR, 7.0):
            for s in (-1.0, 1.0):
                inside = sigmoid_approx(s * alpha * (1 - 1e-12), alpha)
                outside = sigmoid_approx(s * alpha * (1 + 1e-12), alpha)
                assert abs(inside - outside) <= 1e-9

    def test_monotone_in_x(self):
        rng = np.random.default_rng(1)
        for alpha in (0.3, 1.0, ALPHA_STAR, 9.0):
            xs = np.sort(rng.uniform(-3 * alpha, 3 * alpha, size=300))
            vals = sigmoid_approx(xs, alpha)
            assert np.all(np.diff(vals) >= 0.0)

    def test_rejects_nonpositive_alpha(self):
        with pytest.raises(DataValidationError):
            sigmoid_approx(0.0, 0.0)
        with pytest.raises(DataValidationError):
            sigmoid_approx(0.0, -1.0)


class TestDilog:
    def test_zero(self):
        assert dilog(0.0) == 0.0

    def test_minus_one_series_value(self):
        # series oracle: sum (-1)^k / k^2 with consecutive terms paired; the
        # pair tail behaves like -1/(8 N^2), which the last line restores
        n = 2_000_000
        j = np.arange(1.0, n + 1.0)
        series = float(np.sum(1.0 / (2 * j) ** 2 - 1.0 / (2 * j - 1) ** 2))
        series -= 1.0 / (8.0 * n * n)
        assert dilog(-1.0) == pytest.approx(series, abs=1e-14)
        assert dilog(-1.0) == pytest.approx(-math.pi**2 / 12, abs=1e-14)

    def test_against_quadrature(self):
        for z in (-math.exp(-ALPHA_STAR), -0.1, -0.9, -1.0, -2.5, -20.0):
            assert dilog(z) == pytest.approx(dilog_quadrature(z), abs=1e-10)

    def test_large_arguments_against_mpmath(self):
        mp = pytest.importorskip("mpmath")
        for z in (-1e3, -1e6, -math.exp(40)):
            assert dilog(z) == pytest.approx(float(mp.polylog(2, z)), rel=1e-12)

    def test_rejects_positive(self):
        with pytest.raises(DataValidationError):
            dilog(0.5)


class TestSquaredError:
    def test_value_at_pinned_minimum(self):
        assert squared_error(ALPHA_STAR) == pytest.approx(0.0099, abs=1e-4)

    def test_curve_sample_near_one(self):
        # frozen sample of the published error curve near alpha = 1
        assert squared_error(1.00592462311558) == pytest.approx(0.133273733847655, abs=1e-9)
        assert squared_error(1.0) == pytest.approx(0.1333, abs=1.5e-3)

    def test_matches_quadrature(self):
        for alpha in (0.5, 2.0, 5.0, 10.0):
            assert squared_error(alpha) == pytest.approx(
                squared_error_quadrature(alpha), abs=1e-8
            )

    def test_rejects_nonpositive(self):
        with pytest.raises(DataValidationError):
            squared_error(0.0)


class TestFindAlphaStar:
    def test_recovers_the_universal_constant(self):
        t0 = time.perf_counter()
        report = find_alpha_star(tol=1e-10)
        elapsed = time.perf_counter() - t0
        assert elapsed < 1.0
        assert report.alpha_star == pytest.approx(2.5996, abs=1e-3)
        assert report.alpha_star == pytest.approx(80000 / 30773, abs=1e-3)
        assert report.newton_iterations <= 100
        assert report.se_at_min == pytest.approx(squared_error(report.alpha_star), abs=1e-15)

    def test_convexity_probe(self):
        report = find_alpha_star(tol=1e-10)
        assert squared_error(report.alpha_star - 0.1) > report.se_at_min
        assert squared_error(report.alpha_star + 0.1) > report.se_at_min

    def test_max_abs_error_matches_boundary_gap(self):
        # the deviation peaks at the clip boundary: 1 - sigmoid(alpha)
        report = find_alpha_star(tol=1e-10)
        expected = 1.0 - sigmoid(report.alpha_star)
        assert report.max_abs_error == pytest.approx(expected, abs=1e-9)

    def test_rejects_bad_tolerance(self):
        with pytest.raises(DataValidationError):
            find_alpha_star(tol=0.0)


class TestLinearise:
    def test_bias_only_midpoint(self):
        m = linearise(AdditiveModel(0.0, np.zeros(0), (), ()))
        assert predict_lam(m, np.zeros(0)) == 0.5

    def test_large_bias_clips_to_one(self):
        m = linearise(AdditiveModel(3 * ALPHA_STAR, np.zeros(0), (), ()))
        assert predict_lam(m, np.zeros(0)) == 1.0

    def test_original_untouched_and_double_linearise_rejected(self):
        base = AdditiveModel(0.3, np.array([1.0]), ("a",), (U,))
        lin = linearise(base)
        assert base.link is Link.LOGISTIC
        assert lin.link is Link.LINEARISED
        assert lin.alpha_star == ALPHA_STAR
        with pytest.raises(DataValidationError, match="already linearised"):
            linearise(lin)

    def test_identity_with_clipped_approximation(self):
        rng = np.random.default_rng(42)
        worst = 0.0
        for _ in range(2000):
            d = int(rng.integers(1, 20))
            m = _random_model(rng, d)
            lin = linearise(m)
            x = rng.normal(scale=2.0, size=d)
            lhs = sigmoid_approx(m.predict_logit(x), ALPHA_STAR)
            rhs = predict_lam(lin, x)
            worst = max(worst, abs(lhs - rhs))
        assert worst <= 1e-12

    def test_boundary_cases_exact(self):
        for value, expected in ((ALPHA_STAR, 1.0), (-ALPHA_STAR, 0.0), (0.0, 0.5)):
            m = linearise(AdditiveModel(value, np.zeros(0), (), ()))
            assert predict_lam(m, np.zeros(0)) == expected
            assert sigmoid_approx(value, ALPHA_STAR) == expected

    def test_faithful_region_probability_interval(self):
        assert sigmoid(-ALPHA_STAR) == pytest.approx(0.069, abs=5e-4)
        assert sigmoid(ALPHA_STAR) == pytest.approx(0.931, abs=5e-4)

    def test_predict_lam_requires_linearised(self):
        m = AdditiveModel(0.0, np.array([1.0]), ("a",), (U,))
        with pytest.raises(DataValidationError, match="linearised"):
            predict_lam(m, np.ones(1))


class TestAttribution:
    def test_unit_feature_contribution(self):
        m = linearise(AdditiveModel(0.0, np.array([1.61]), ("debt",), (U,)))
        attribution = attribute_lam(m, np.ones(1))
        assert attribution.contributions[0] == pytest.approx(0.310, abs=5e-4)

    def test_zero_row_leaves_only_bias(self):
        m = linearise(AdditiveModel(1.0, np.array([2.0, -1.0]), ("a", "b"), (U, U)))
        attribution = attribute_lam(m, np.zeros(2))
        assert np.all(attribution.contributions == 0.0)
        assert attribution.bias_term == pytest.approx(1.0 / (2 * ALPHA_STAR))
        assert attribution.pre_clip_score == pytest.approx(0.5 + attribution.bias_term, abs=1e-15)

    def test_sum_reconstruction(self):
        rng = np.random.default_rng(7)
        for _ in range(200):
            d = int(rng.integers(1, 15))
            m = linearise(_random_model(rng, d))
            x = rng.normal(size=d)
            attribution = attribute_lam(m, x)
            total = 0.5 + attribution.bias_term + attribution.contributions.sum()
            assert abs(total - attribution.pre_clip_score) <= 1e-12

    def test_faithful_flag_tracks_the_linear_region(self):
        m = linearise(AdditiveModel(0.0, np.array([1.0]), ("a",), (U,)))
        inside = attribute_lam(m, np.array([ALPHA_STAR * 0.99]))
        outside = attribute_lam(m, np.array([ALPHA_STAR * 1.01]))
        assert inside.faithful and 0.0 < inside.prediction < 1.0
        assert not outside.faithful and outside.prediction == 1.0
