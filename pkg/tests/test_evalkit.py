"""Verification metrics: CSI, MSE-by-lead, reliability, correlation, cost."""

import math

import mpmath as mp
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import stats as sps

from evistorm.errors import ConfigError, ShapeError
from evistorm.evalkit import (
    CSI_THRESHOLDS,
    COVERAGE_LEVELS,
    CostProfile,
    GaussianPredictive,
    StudentTPredictive,
    csi,
    mse_by_lead,
    profile,
    reliability,
    uncertainty_error_correlation,
)
from evistorm.numerics import Tensor, matmul

mp.mp.dps = 40


def brute_force_csi(pred: np.ndarray, truth: np.ndarray, tau: int) -> tuple[int, int, int]:
    hits = misses = fas = 0
    for p, t in zip(pred.reshape(-1), truth.reshape(-1)):
        p_event = p * 255.0 >= tau
        t_event = t * 255.0 >= tau
        if p_event and t_event:
            hits += 1
        elif t_event:
            misses += 1
        elif p_event:
            fas += 1
    return hits, misses, fas


class TestCSI:
    def test_perfect_forecast(self, rng):
        truth = rng.random((3, 8, 8))
        report = csi(truth, truth)
        for score in report.scores:
            if score.defined:
                assert score.csi == 1.0
                assert score.misses == 0 and score.false_alarms == 0

    def test_direct_count(self):
        truth = np.array([[1.0, 1.0], [0.0, 0.0]])
        pred = np.array([[1.0, 0.0], [1.0, 0.0]])
        score = csi(pred, truth, thresholds=(16,)).scores[0]
        assert (score.hits, score.misses, score.false_alarms) == (1, 1, 1)
        assert score.csi == pytest.approx(1.0 / 3.0)

    def test_matches_brute_force_oracle(self, rng):
        for _ in range(10):
            pred = rng.random((2, 8, 8))
            truth = rng.random((2, 8, 8))
            report = csi(pred, truth)
            for score in report.scores:
                want = brute_force_csi(pred, truth, score.threshold)
                assert (score.hits, score.misses, score.false_alarms) == want

    def test_undefined_flagged(self):
        zero = np.zeros((2, 4, 4))
        report = csi(zero, zero)
        for score in report.scores:
            assert not score.defined
            assert math.isnan(score.csi)

    def test_shape_mismatch(self):
        with pytest.raises(ShapeError):
            csi(np.zeros((2, 2)), np.zeros((3, 3)))

    def test_ties_count_as_events(self):
        value = 16.0 / 255.0
        truth = np.full((1, 1), value)
        score = csi(truth, truth, thresholds=(16,)).scores[0]
        assert score.hits == 1

    @settings(max_examples=25, deadline=None)
    @given(st.floats(0.55, 0.95), st.integers(0, 2 ** 31 - 1))
    def test_monotone_for_nested_underforecast(self, scale, seed):
        """pred = a * truth (a < 1) gives nested binarized fields and a
        CSI that decreases in the threshold (up to sampling noise)."""
        truth = np.random.default_rng(seed).random(20000)
        pred = scale * truth
        report = csi(pred.reshape(1, -1, 1), truth.reshape(1, -1, 1))
        values = [s.csi for s in report.scores if s.defined]
        for a, b in zip(values, values[1:]):
            assert b <= a + 0.01


class TestMSEByLead:
    def test_zero_error(self, rng):
        truth = rng.random((4, 12, 5, 5))
        curve = mse_by_lead(truth, truth)
        assert np.array_equal(curve.values, np.zeros(12))

    def test_constant_offset(self, rng):
        truth = rng.random((2, 12, 4, 4)) * 0.5
        curve = mse_by_lead(truth + 0.1, truth)
        assert np.allclose(curve.values, 0.01, atol=1e-15)

    def test_matches_naive_loop_oracle(self, rng):
        pred = rng.random((3, 4, 5, 5))
        truth = rng.random((3, 4, 5, 5))
        curve = mse_by_lead(pred, truth)
        for lead in range(4):
            total = 0.0
            count = 0
            for s in range(3):
                for i in range(5):
                    for j in range(5):
                        total += (pred[s, lead, i, j] - truth[s, lead, i, j]) ** 2
                        count += 1
            assert abs(curve.values[lead] - total / count) < 1e-12


def t_cdf_oracle(x: float, nu: float) -> mp.mpf:
    """Student-t CDF via the regularized incomplete beta, high precision."""
    x, nu = mp.mpf(x), mp.mpf(nu)
    z = nu / (nu + x * x)
    tail = mp.betainc(nu / 2, mp.mpf("0.5"), 0, z, regularized=True) / 2
    return 1 - tail if x >= 0 else tail


def t_quantile_oracle(p: float, nu: float) -> float:
    """Invert the oracle CDF by bisection to ~1e-12."""
    lo, hi = mp.mpf(0), mp.mpf(1000)
    target = mp.mpf(p)
    assert target >= 0.5
    for _ in range(200):
        mid = (lo + hi) / 2
        if t_cdf_oracle(mid, nu) < target:
            lo = mid
        else:
            hi = mid
    return float((lo + hi) / 2)


class TestReliability:
    def test_gaussian_self_consistency(self, rng):
        mean = rng.random(10_000)
        sd = rng.uniform(0.05, 0.3, size=10_000)
        truth = rng.normal(mean, sd)
        curve = reliability(GaussianPredictive(mean, sd ** 2), truth)
        assert curve.max_gap() < 0.05

    def test_student_t_self_consistency(self, rng):
        loc = rng.random(10_000)
        scale = rng.uniform(0.05, 0.3, size=10_000)
        dof = rng.uniform(2.5, 30.0, size=10_000)
        truth = loc + scale * rng.standard_t(dof)
        curve = reliability(StudentTPredictive(loc, scale ** 2, dof), truth)
        assert curve.max_gap() < 0.05

    def test_infinite_variance_covers_everything(self, rng):
        mean = np.zeros(50)
        truth = rng.standard_normal(50) * 100
        curve = reliability(GaussianPredictive(mean, np.full(50, np.inf)), truth)
        assert np.all(curve.observed == 1.0)

    def test_collapsed_interval_coverage(self):
        mean = np.full(20, 0.5)
        truth = np.full(20, 0.7)
        curve = reliability(GaussianPredictive(mean, np.zeros(20)), truth)
        assert np.all(curve.observed == 0.0)
        assert curve.collapsed_fraction == 1.0
        # equality with the point forecast counts as covered
        curve2 = reliability(GaussianPredictive(mean, np.zeros(20)), mean.copy())
        assert np.all(curve2.observed == 1.0)

    def test_observed_coverage_is_monotone_in_level(self, rng):
        mean = rng.random(500)
        truth = rng.random(500)
        curve = reliability(GaussianPredictive(mean, np.full(500, 0.01)), truth)
        assert np.all(np.diff(curve.observed) >= 0.0)

    def test_t_quantiles_match_cdf_inversion_oracle(self):
        for nu in (2.5, 4.0, 10.0, 40.0):
            for p in (0.525, 0.7, 0.9, 0.975):
                got = float(sps.t.ppf(p, nu))
                want = t_quantile_oracle(p, nu)
                assert abs(got - want) < 1e-8, (p, nu)

    def test_levels_default(self):
        assert len(COVERAGE_LEVELS) == 19
        assert COVERAGE_LEVELS[0] == 0.05 and COVERAGE_LEVELS[-1] == 0.95


class TestCorrelation:
    def test_identical_vectors_give_one(self, rng):
        base = rng.random((30, 6, 1, 1))
        curve = uncertainty_error_correlation(base, base.copy())
        assert np.allclose(curve.values, 1.0, atol=1e-12)
        assert bool(curve.defined.all())

    def test_normalization_anchor(self, rng):
        unc = rng.random((40, 5, 2, 2))
        err = unc * rng.uniform(0.5, 1.5) + rng.random((40, 5, 2, 2)) * 0.1
        curve = uncertainty_error_correlation(unc, err, normalize=True)
        assert curve.values[0] == pytest.approx(1.0, abs=1e-12)

    def test_independent_inputs_near_zero(self, rng):
        unc = rng.random((10_000, 2, 1, 1))
        err = rng.random((10_000, 2, 1, 1))
        curve = uncertainty_error_correlation(unc, err, normalize=False)
        assert np.max(np.abs(curve.values)) < 0.03

    def test_zero_variance_flagged(self, rng):
        unc = np.ones((20, 3, 2, 2))
        err = rng.random((20, 3, 2, 2))
        curve = uncertainty_error_correlation(unc, err, normalize=False)
        assert not curve.defined.any()
        assert np.all(np.isnan(curve.values))


class TestProfile:
    @staticmethod
    def _runner():
        matmul(Tensor(np.ones((8, 8))), Tensor(np.ones((8, 8))))

    def test_flops_and_invariant(self):
        cost = profile(self._runner, parameter_count=64, passes=1, n_repeats=3, warmup=1)
        assert cost.total_flops == 2 * 8 * 8 * 8
        assert cost.flops_per_pass * cost.passes == cost.total_flops
        assert cost.wall_mean_s > 0.0

    def test_flops_deterministic(self):
        a = profile(self._runner, parameter_count=64, n_repeats=2, warmup=0)
        b = profile(self._runner, parameter_count=64, n_repeats=2, warmup=0)
        assert a.total_flops == b.total_flops

    def test_pass_divisibility_enforced(self):
        with pytest.raises(ConfigError):
            CostProfile(total_flops=10, passes=3, wall_mean_s=0.0,
                        wall_sd_s=0.0, parameter_count=1, n_repeats=1)
