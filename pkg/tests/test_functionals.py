import math
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from helpers import h_sum_exact, triangle_areas
from ripscov.errors import DegenerateSimplexError, ParameterError
from ripscov.functionals import (FunctionalSpec, binomial, evaluate_vector, f_vector,
                                 gated_simplex_volume, h_functional,
                                 normalizing_constant, simplex_volume, volume_power)
from ripscov.geometry import (PointCloud, build_neighbor_graph, enumerate_simplices,
                              brute_force_simplices)


def complex_for(points, delta, cap=3):
    cloud = PointCloud(points.shape[1], points)
    return enumerate_simplices(build_neighbor_graph(cloud, delta), cap), cloud


class TestSimplexVolume:
    def test_segment_length(self):
        assert simplex_volume([[0.0, 0.0], [3.0, 4.0]]) == pytest.approx(5.0, abs=1e-14)

    def test_unit_right_triangle(self):
        vol = simplex_volume([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]])
        assert vol == pytest.approx(0.5, abs=1e-14)

    def test_collinear_points_are_flat(self):
        assert simplex_volume([[0.0, 0.0], [0.5, 0.5], [1.0, 1.0]]) == 0.0

    def test_tetrahedron(self):
        verts = [[0, 0, 0], [1, 0, 0], [0, 1, 0], [0, 0, 1]]
        assert simplex_volume(verts) == pytest.approx(1 / 6, rel=1e-13)

    @pytest.mark.parametrize("lam", [0.5, 2.0])
    @pytest.mark.parametrize("k", [1, 2, 3])
    def test_scaling_by_lambda_to_the_k(self, lam, k, rng):
        verts = rng.random((k + 1, 3))
        base = simplex_volume(verts)
        scaled = simplex_volume(lam * verts)
        assert scaled == pytest.approx(lam**k * base, rel=1e-12)

    @settings(max_examples=20, deadline=None)
    @given(seed=st.integers(0, 10**6))
    def test_permutation_invariance(self, seed):
        rng = np.random.default_rng(seed)
        verts = rng.random((4, 3))
        base = simplex_volume(verts)
        perm = rng.permutation(4)
        assert simplex_volume(verts[perm]) == pytest.approx(base, rel=1e-11, abs=1e-13)

    def test_dimension_above_ambient_rejected(self):
        with pytest.raises(ParameterError):
            simplex_volume([[0.0], [0.5], [1.0]])  # k=2 in d=1

    def test_nonfinite_rejected(self):
        with pytest.raises(ParameterError):
            simplex_volume([[0.0, 0.0], [np.inf, 1.0]])


class TestGatedVolume:
    def test_edge_longer_than_gate_is_zero(self):
        assert gated_simplex_volume([[0.0, 0.0], [1.0 + 1e-9, 0.0]], 1.0, 1, 2) == 0.0

    def test_above_ambient_dimension_is_indicator(self):
        verts = [[0.0, 0.0], [0.1, 0.0], [0.0, 0.1], [0.1, 0.1]]  # k=3 in d=2
        assert gated_simplex_volume(verts, 0.5, 3, 2) == 1.0
        far = [[0.0, 0.0], [0.1, 0.0], [0.0, 0.1], [0.9, 0.9]]
        assert gated_simplex_volume(far, 0.5, 3, 2) == 0.0

    def test_unit_segment_with_wide_gate(self):
        assert gated_simplex_volume([[0.0, 0.0], [1.0, 0.0]], 2.0, 1, 2) == 1.0


class TestVolumePower:
    def test_power_zero_counts_simplices(self, rng):
        cx, cloud = complex_for(rng.random((40, 2)), 0.25)
        for k in range(4):
            assert volume_power(cx, cloud, FunctionalSpec(k, 0.0)) == cx.count(k)

    def test_single_edge_square_power(self):
        pts = np.array([[0.1, 0.1], [0.1, 0.4]])
        cx, cloud = complex_for(pts, 0.5, cap=1)
        value = volume_power(cx, cloud, FunctionalSpec(1, 2.0))
        assert value == pytest.approx(0.09, rel=1e-12)

    def test_triangle_areas_match_brute_force(self, rng):
        pts = rng.random((12, 2))
        cx, cloud = complex_for(pts, 0.45, cap=2)
        value = volume_power(cx, cloud, FunctionalSpec(2, 1.0))
        assert value == pytest.approx(triangle_areas(pts, 0.45), rel=1e-11)

    def test_additive_over_components(self, rng):
        left = rng.random((12, 2)) * 0.25
        right = rng.random((10, 2)) * 0.25 + 0.7
        both = np.vstack([left, right])
        spec = FunctionalSpec(1, 1.5)
        cx, cloud = complex_for(both, 0.2, cap=1)
        cx_l, cloud_l = complex_for(left, 0.2, cap=1)
        cx_r, cloud_r = complex_for(right, 0.2, cap=1)
        assert volume_power(cx, cloud, spec) == pytest.approx(
            volume_power(cx_l, cloud_l, spec) + volume_power(cx_r, cloud_r, spec),
            rel=1e-12)

    def test_negative_power_on_degenerate_simplex(self):
        pts = np.array([[0.1, 0.1], [0.2, 0.2], [0.3, 0.3]])  # collinear triangle
        cx, cloud = complex_for(pts, 0.9, cap=2)
        assert cx.count(2) == 1
        with pytest.raises(DegenerateSimplexError):
            volume_power(cx, cloud, FunctionalSpec(2, -0.5))

    def test_spec_above_cap_rejected(self, rng):
        cx, cloud = complex_for(rng.random((10, 2)), 0.3, cap=1)
        with pytest.raises(ParameterError):
            volume_power(cx, cloud, FunctionalSpec(2, 0.0))

    def test_k_zero_counts_points(self, rng):
        cx, cloud = complex_for(rng.random((17, 2)), 0.3, cap=1)
        assert volume_power(cx, cloud, FunctionalSpec(0, 1.7)) == 17.0

    def test_periodic_edge_lengths_use_torus_metric(self):
        pts = np.array([[0.02, 0.5], [0.98, 0.5]])
        cloud = PointCloud(2, pts)
        cx = enumerate_simplices(build_neighbor_graph(cloud, 0.1, periodic=True), 1)
        value = volume_power(cx, cloud, FunctionalSpec(1, 1.0))
        assert value == pytest.approx(0.04, rel=1e-12)


class TestFVector:
    def test_triangle(self):
        pts = np.array([[0.1, 0.1], [0.2, 0.1], [0.15, 0.18]])
        cx, _ = complex_for(pts, 0.15, cap=2)
        assert f_vector(cx) == [3, 3, 1]

    def test_empty(self):
        cx, _ = complex_for(np.empty((0, 2)), 0.5, cap=2)
        assert f_vector(cx) == [0, 0, 0]

    def test_matches_brute_force(self, rng):
        pts = rng.random((50, 2))
        cloud = PointCloud(2, pts)
        cx = enumerate_simplices(build_neighbor_graph(cloud, 0.22), 3)
        oracle = brute_force_simplices(cloud, 0.22, 3)
        assert f_vector(cx) == f_vector(oracle)


class TestHFunctional:
    def test_h0_is_one(self, rng):
        cx, _ = complex_for(rng.random((20, 2)), 0.3)
        assert h_functional(cx, 0, 2) == 1

    def test_triangle_h1(self):
        pts = np.array([[0.1, 0.1], [0.2, 0.1], [0.15, 0.18]])
        cx, _ = complex_for(pts, 0.15, cap=3)
        l = min(2, cx.dimension + 1)
        assert h_functional(cx, 1, 2) == -l + 3

    @pytest.mark.parametrize("seed", range(4))
    @pytest.mark.parametrize("d", [2, 3])
    def test_matches_rational_binomial_sum(self, seed, d):
        rng = np.random.default_rng(seed)
        cx, _ = complex_for(rng.random((30, 2)), 0.3, cap=d + 1)
        l = min(d, cx.dimension + 1)
        counts = [cx.count(i) for i in range(max(l, 1))]
        for k in range(l + 1):
            exact = h_sum_exact(counts, k, l)
            assert exact.denominator == 1
            assert h_functional(cx, k, d) == exact.numerator

    def test_l_convention_flag(self):
        pts = np.array([[0.1, 0.1], [0.2, 0.1], [0.15, 0.18]])
        cx, _ = complex_for(pts, 0.15, cap=3)  # dimension 2
        assert h_functional(cx, 1, 3) != h_functional(cx, 1, 3, "capped-dim-plus-one") \
            or min(3, cx.dimension + 1) == min(3, cx.dimension) + 1

    def test_k_out_of_range(self, rng):
        cx, _ = complex_for(rng.random((10, 2)), 0.2)
        with pytest.raises(ParameterError):
            h_functional(cx, 5, 2)

    def test_truncation_above_ambient_dimension(self):
        # four mutually close points: the complex reaches dimension 3 in d=2
        pts = np.array([[0.5, 0.5], [0.52, 0.5], [0.5, 0.52], [0.52, 0.52]])
        cx, _ = complex_for(pts, 0.1, cap=3)
        assert cx.dimension == 3
        assert h_functional(cx, 2, 2) == h_sum_exact([4, 6], 2, 2).numerator


class TestBinomial:
    @pytest.mark.parametrize("a,b,expect", [(5, 2, 10), (3, 0, 1), (2, 3, 0),
                                            (-1, 0, 0), (-2, 1, 0), (0, 0, 1)])
    def test_convention(self, a, b, expect):
        assert binomial(a, b) == expect


class TestNormalization:
    def test_k_zero_is_sqrt_t(self):
        q = normalizing_constant(400.0, 0.01, 2, FunctionalSpec(0, 3.0))
        assert q == pytest.approx(20.0, rel=1e-15)

    @pytest.mark.parametrize("t,delta", [(1000.0, 0.001), (1000.0, 0.2)])
    def test_k_one_branch_matches_exponent_scan(self, t, delta):
        # independent oracle: scan the exponent set directly
        alpha, d, k = 1.5, 2, 1
        x = t * delta**d
        expect = math.sqrt(t) * delta**alpha * max(x ** (k - (m - 1) / 2)
                                                   for m in (1, 2))
        q = normalizing_constant(t, delta, d, FunctionalSpec(k, alpha))
        assert q == pytest.approx(expect, rel=1e-14)
        if x >= 1:
            assert q == pytest.approx(math.sqrt(t) * delta**alpha * x, rel=1e-14)
        else:
            assert q == pytest.approx(math.sqrt(t) * delta**alpha * math.sqrt(x), rel=1e-14)

    def test_invalid_parameters(self):
        with pytest.raises(ParameterError):
            normalizing_constant(0.0, 0.1, 2, FunctionalSpec(1, 0.0))


class TestEvaluateVector:
    def test_values_and_normalization(self, rng):
        pts = rng.random((35, 2))
        cx, cloud = complex_for(pts, 0.2, cap=2)
        specs = [FunctionalSpec(1, 0.0), FunctionalSpec(1, 1.0), FunctionalSpec(2, 0.0)]
        vec = evaluate_vector(cx, cloud, specs, 35.0, 0.2)
        assert vec.values[0] == cx.count(1)
        assert vec.values[2] == cx.count(2)
        for i, spec in enumerate(specs):
            q = normalizing_constant(35.0, 0.2, 2, spec)
            assert vec.normalized[i] == vec.values[i] / q
        assert np.all(vec.values >= 0)
