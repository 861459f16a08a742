import math

import numpy as np
import pytest

from ripscov import applications as app
from ripscov.algebra import rank_one_eigensystem, scale_coefficients, same_k_pair_cholesky
from ripscov.covariance import (AdmissibleSequence, Regime, assemble_covariance,
                                required_moment_keys)
from ripscov.errors import NearSingularError, ParameterError
from ripscov.moments import MomentKey, MomentTable, unit_ball_volume


def random_spd3(rng):
    m = rng.standard_normal((3, 3))
    return m @ m.T + 0.1 * np.eye(3)


class TestVarianceBounds:
    def test_basis_vector_brackets_diagonal_entry(self, example_sequence, example_table):
        model = assemble_covariance(example_sequence, Regime.subcritical(), example_table)
        vb = app.variance_bounds(np.array([1.0, 0.0, 0.0]), sigma=model.matrix)
        assert vb.lower <= model.matrix[0, 0] <= vb.upper
        assert vb.quadratic_form == pytest.approx(model.matrix[0, 0], rel=1e-12)

    def test_rayleigh_property_random_directions(self, example_sequence, example_table,
                                                 rng):
        model = assemble_covariance(example_sequence, Regime.critical(1.0), example_table)
        for _ in range(100):
            b = rng.standard_normal(3)
            vb = app.variance_bounds(b, sigma=model.matrix)
            assert vb.lower - 1e-12 <= vb.quadratic_form <= vb.upper + 1e-12

    def test_kernel_direction_has_no_variance(self, example_sequence, example_table):
        model = assemble_covariance(example_sequence, Regime.supercritical(),
                                    example_table)
        a = scale_coefficients(example_sequence, example_table)
        _, v = rank_one_eigensystem(a)
        vb = app.variance_bounds(v[:, 0], sigma=model.matrix)
        assert abs(vb.quadratic_form) <= 1e-10 * np.abs(model.matrix).max()

    def test_explicit_bounds_without_matrix(self):
        vb = app.variance_bounds(np.array([1.0, 2.0]), eig_lower=0.5, eig_upper=2.0,
                                 source="regime-bound")
        assert vb.lower == pytest.approx(2.5) and vb.upper == pytest.approx(10.0)
        assert vb.source == "regime-bound"

    def test_lower_clipped_at_zero(self):
        vb = app.variance_bounds(np.array([1.0]), eig_lower=-1e-12, eig_upper=1.0)
        assert vb.lower == 0.0

    def test_needs_some_input(self):
        with pytest.raises(ParameterError):
            app.variance_bounds(np.array([1.0]))


class TestHCoefficients:
    def test_values(self):
        b = app.h_coefficients(2, 3)
        # i=1: -C(2,1) = -2 ; i=2: +C(1,0) = 1
        assert np.array_equal(b, [-2.0, 1.0])

    def test_shift_invariance_of_sample_variance(self):
        # H values are integers: adding the constant term cannot move the variance
        rng = np.random.default_rng(8)
        h = rng.integers(0, 40, size=500).astype(float)
        const = 7.0
        assert np.var(h, ddof=1) == np.var(h - const, ddof=1)


@pytest.fixture(scope="module")
def h_table():
    table = MomentTable(3)
    seq = AdmissibleSequence(tuple((i, 0.0) for i in range(3)), 3)
    table.ensure(required_moment_keys(seq), 4096, seed=99)
    return table


class TestHVarianceBounds:

    def test_k_one_brackets_point_count_variance(self, h_table):
        # H_1 = f_0 - l: the variance is that of the normalized point count, 1
        rep = app.h_variance_bounds(1, 3, "sub", h_table)
        assert rep.bounds.lower <= 1.0 <= rep.bounds.upper
        assert rep.bounds.lower == pytest.approx(1.0) == pytest.approx(rep.bounds.upper)

    def test_super_upper_formula(self, h_table):
        # ||b||^2 (1/a_1^2 + 1/a_2^2) with a_i = (i-1)!/mu_{i-1}^(0)
        rep = app.h_variance_bounds(2, 3, "super", h_table)
        b = app.h_coefficients(2, 3)
        expect = float(b @ b) * (1.0 + unit_ball_volume(3) ** 2)
        assert rep.bounds.upper == pytest.approx(expect, rel=1e-12)
        assert rep.bounds.lower == 0.0

    def test_sub_bounds_and_literal(self, h_table):
        rep = app.h_variance_bounds(2, 3, "sub", h_table)
        b = app.h_coefficients(2, 3)
        diag = [1.0, unit_ball_volume(3) / 2.0]
        assert rep.bounds.lower == pytest.approx(float(b @ b) * min(diag), rel=1e-12)
        assert rep.bounds.upper == pytest.approx(float(b @ b) * max(diag), rel=1e-12)
        assert rep.literal_lower == pytest.approx(float(b @ b) * 1.0, rel=1e-12)

    def test_critical_tagging_and_formula(self, h_table):
        rep = app.h_variance_bounds(2, 3, "critical", h_table)
        b = app.h_coefficients(2, 3)
        kappa = unit_ball_volume(3)
        best = max(kappa ** (2 * 2 - m) * sum(
            1.0 / (math.factorial(m + 1) * math.factorial(i - 1 - m) ** 2)
            for i in range(1, 3) if i - 1 >= m) for m in range(2))
        assert rep.bounds.upper == pytest.approx(float(b @ b) * 3 * best, rel=1e-12)
        assert isinstance(rep.applicable, bool)

    def test_k_above_l_rejected(self, h_table):
        with pytest.raises(ParameterError):
            app.h_variance_bounds(4, 3, "sub", h_table)


class TestPartialCorrelation:
    def test_diagonal_gives_exact_zero(self):
        assert app.partial_correlation(np.diag([1.0, 2.0, 3.0])) == 0.0

    def test_equicorrelated_value(self):
        # I + 0.5*ones: residual-regression oracle gives 1/4 by hand
        sigma = np.eye(3) + 0.5 * np.ones((3, 3))
        cov12 = 0.5 - 0.5 * 0.5 / 1.5
        cov11 = 1.5 - 0.25 / 1.5
        assert app.partial_correlation(sigma) == pytest.approx(cov12 / cov11, rel=1e-12)

    @pytest.mark.parametrize("seed", range(10))
    def test_dual_route_agreement_and_range(self, seed):
        rng = np.random.default_rng(seed)
        for _ in range(30):
            rho = app.partial_correlation(random_spd3(rng))
            assert abs(rho) <= 1 + 1e-12

    def test_near_singular_rejected(self):
        with pytest.raises(NearSingularError):
            app.partial_correlation(np.ones((3, 3)))

    def test_shape_validation(self):
        with pytest.raises(ParameterError):
            app.partial_correlation(np.eye(2))


class TestSpearman:
    def test_perfect_monotone(self):
        assert app.spearman([1, 2, 3, 4], [10, 20, 30, 40]) == 1.0
        assert app.spearman([1, 2, 3, 4], [5, 4, 3, 2]) == -1.0

    def test_constant_series(self):
        assert app.spearman([1, 2, 3], [7, 7, 7]) == 0.0

    def test_nonmonotone(self):
        assert abs(app.spearman([1, 2, 3, 4], [1, 3, 2, 4])) < 1.0


class TestResidualSeries:
    def test_flat_series_has_zero_slope(self):
        series = app.ResidualSeries(np.array([10., 20., 40., 80.]),
                                    np.full(4, 2.5), "flat")
        assert app.decay_exponent(series) == pytest.approx(0.0, abs=1e-12)

    def test_inverse_t_slope(self):
        ts = np.array([100.0, 300.0, 1000.0, 3000.0, 10000.0])
        series = app.ResidualSeries(ts, 1.0 / ts, "synthetic")
        assert app.decay_exponent(series) == pytest.approx(-1.0, abs=0.05)

    def test_needs_four_points(self):
        series = app.ResidualSeries(np.array([1.0, 2.0, 3.0]), np.ones(3), "x")
        with pytest.raises(ParameterError):
            app.decay_exponent(series)

    def test_grid_must_increase(self):
        with pytest.raises(ParameterError):
            app.ResidualSeries(np.array([2.0, 1.0]), np.ones(2), "x")

    def test_difference_series_trend(self, pair_sequence_2d, pair_table_2d, rng):
        # synthetic trials whose covariance tightens onto the rank-1 direction
        a = scale_coefficients(pair_sequence_2d, pair_table_2d)
        batches = []
        for t, eps in ((100.0, 0.1), (1000.0, 0.03), (10000.0, 0.01)):
            common = rng.standard_normal(400)
            raw = np.stack([common / a[0], common / a[1]], axis=1)
            raw += eps * rng.standard_normal((400, 2))
            batches.append((t, raw))
        series = app.difference_residual_series(batches, pair_sequence_2d, 0, 1,
                                                pair_table_2d)
        assert series.kind == "dense-difference"
        assert series.trend == -1.0

    def test_difference_series_needs_trials(self, pair_sequence_2d, pair_table_2d):
        with pytest.raises(ParameterError):
            app.difference_residual_series([(10.0, np.zeros((50, 2)))],
                                           pair_sequence_2d, 0, 1, pair_table_2d)


class TestGaussianResidual:
    def test_synthetic_gaussian_hits_unit_variance(self, pair_sequence_2d, pair_table_2d,
                                                   rng):
        # oracle: draw from the exact sparse-limit law and push through the pipeline
        t, delta = 2000.0, 2000.0 ** -0.8
        model = assemble_covariance(pair_sequence_2d, Regime.subcritical(), pair_table_2d)
        g, _ = same_k_pair_cholesky(1, 0.0, 1.0, 2, pair_table_2d)
        means = app.theoretical_normalized_means(pair_sequence_2d, t, delta, pair_table_2d)
        z = rng.standard_normal((4000, 2))
        raw = means + z @ g.T
        rep = app.gaussian_residual_stats(raw, pair_sequence_2d, t, delta, pair_table_2d)
        assert rep.all_pass
        assert rep.variance == pytest.approx(1.0, abs=rep.variance_band)
        assert abs(rep.mean) <= rep.mean_band
        assert abs(rep.correlation) <= rep.correlation_band

    def test_bands_scale_with_trials(self, pair_sequence_2d, pair_table_2d, rng):
        raw = rng.standard_normal((500, 2))
        rep = app.gaussian_residual_stats(raw, pair_sequence_2d, 100.0, 0.05,
                                          pair_table_2d)
        assert rep.mean_band == pytest.approx(3 / math.sqrt(500))
        assert rep.variance_band == pytest.approx(3 * math.sqrt(2) / math.sqrt(500))

    def test_requires_equal_k_pair(self, pair_table_2d):
        seq = AdmissibleSequence(((1, 0.0), (2, 0.0)), 2)
        with pytest.raises(ParameterError):
            app.gaussian_residual_stats(np.zeros((10, 2)), seq, 10.0, 0.1, pair_table_2d)


class TestTheoreticalMeans:
    def test_matches_expectation_formula(self, pair_sequence_2d, pair_table_2d):
        from ripscov.functionals import FunctionalSpec, normalizing_constant
        t, delta = 500.0, 0.02
        means = app.theoretical_normalized_means(pair_sequence_2d, t, delta, pair_table_2d)
        for i, (k, a) in enumerate(pair_sequence_2d.pairs):
            mu = pair_table_2d.value(MomentKey.single(2, k, a))
            raw_mean = mu * t ** (k + 1) * delta ** (k * (a + 2)) / math.factorial(k + 1)
            q = normalizing_constant(t, delta, 2, FunctionalSpec(k, a))
            assert means[i] == pytest.approx(raw_mean / q, rel=1e-14)
