import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from adaptlattice import dynamics
from adaptlattice.paramspace import (DimensionError, LumpedParams, ParamPolytope, WeightError,
                                     box_polytope, check_weights, contains, convex_combine,
                                     diam, project, sample_discrete)


def c_point(c1, c2):
    return dynamics.quadrotor_params(c1, c2)


def brute_diam(P):
    return max((np.linalg.norm(a - b) for a, b in itertools.combinations(P.points, 2)), default=0.0)


class TestLumpedParams:
    def test_shapes_and_matrix(self):
        M = LumpedParams([[1.0, 2.0]], [[3.0]])
        assert M.shape == (1, 2, 1)
        assert M.matrix.tolist() == [[1.0, 2.0, 3.0]]

    def test_row_mismatch_rejected(self):
        with pytest.raises(DimensionError):
            LumpedParams(np.zeros((2, 2)), np.zeros((3, 1)))

    def test_arrays_read_only(self):
        M = LumpedParams([[1.0]], [[1.0]])
        with pytest.raises(ValueError):
            M.theta_x[0, 0] = 2.0

    def test_like_round_trip(self):
        M = c_point(-1e-3, 4e-3)
        assert M.like(M.flat) == M


class TestDiam:
    def test_single_vertex(self):
        assert diam(ParamPolytope((LumpedParams([[1.0]], [[1.0]]),))) == 0.0

    def test_quadrotor_box(self, psi_box):
        assert diam(psi_box) == pytest.approx(7.4330e-3, abs=5e-8)
        assert diam(psi_box) == pytest.approx(np.hypot(0.005, 0.0055), rel=1e-12)
        assert diam(psi_box) == pytest.approx(brute_diam(psi_box), rel=1e-15)

    def test_single_entry_difference(self):
        a = LumpedParams(np.zeros((2, 2)), np.eye(2))
        tx = np.zeros((2, 2))
        tx[1, 0] = 2.0
        assert diam(ParamPolytope((a, LumpedParams(tx, np.eye(2))))) == pytest.approx(2.0)

    @settings(max_examples=50, deadline=None)
    @given(st.integers(0, 2 ** 31), st.floats(0.1, 10.0))
    def test_permutation_and_scaling(self, seed, scale):
        rng = np.random.default_rng(seed)
        pts = rng.normal(size=(5, 2, 3))
        P = ParamPolytope(tuple(LumpedParams.from_matrix(p, 2) for p in pts))
        perm = ParamPolytope(tuple(P.vertices[i] for i in rng.permutation(5)))
        scaled = ParamPolytope(tuple(LumpedParams.from_matrix(scale * p, 2) for p in pts))
        assert diam(perm) == pytest.approx(diam(P), rel=1e-12)
        assert diam(scaled) == pytest.approx(scale * diam(P), rel=1e-12)


class TestContainsAndProject:
    def test_vertices_contained_exactly(self, psi_box):
        for v in psi_box.vertices:
            assert contains(psi_box, v, tol=0.0)

    def test_quadrotor_membership(self, psi_box):
        assert contains(psi_box, c_point(-2.5e-3, 5.0e-3))
        assert not contains(psi_box, c_point(1e-3, 5e-3))

    def test_box_detected(self, psi_box):
        lo, hi = psi_box.box
        assert (hi - lo != 0).sum() == 2

    def test_projection_examples(self, psi_box):
        assert project(psi_box, c_point(1e-3, 5e-3)) == c_point(0.0, 5e-3)
        assert project(psi_box, c_point(-2.5e-3, 1e-3)) == c_point(-2.5e-3, 2.25e-3)
        inside = c_point(-1e-3, 3e-3)
        assert project(psi_box, inside) == inside

    def test_dimension_mismatch(self, psi_box):
        with pytest.raises(DimensionError):
            contains(psi_box, LumpedParams([[1.0]], [[1.0]]))

    def test_general_hull_triangle(self):
        tri = ParamPolytope(tuple(LumpedParams([p], np.zeros((1, 0))) for p in
                                  ([0.0, 0.0], [2.0, 0.0], [0.0, 2.0])))
        assert tri.box is None
        out = project(tri, LumpedParams([[2.0, 2.0]], np.zeros((1, 0))))
        assert np.allclose(out.matrix, [[1.0, 1.0]], atol=1e-9)
        out = project(tri, LumpedParams([[-1.0, 0.5]], np.zeros((1, 0))))
        assert np.allclose(out.matrix, [[0.0, 0.5]], atol=1e-9)

    @settings(max_examples=60, deadline=None)
    @given(st.integers(0, 2 ** 31))
    def test_general_projection_is_nearest(self, seed):
        # Compare the min-norm-point projection with a dense convex-weight search.
        rng = np.random.default_rng(seed)
        pts = rng.normal(size=(4, 1, 3))
        P = ParamPolytope(tuple(LumpedParams(p, np.zeros((1, 0))) for p in pts))
        M = LumpedParams(rng.normal(size=(1, 3)) * 2, np.zeros((1, 0)))
        got = project(P, M)
        assert contains(P, got, 1e-9)
        w = rng.dirichlet(np.ones(4), size=20000)
        cand = w @ P.points
        best = np.min(np.linalg.norm(cand - M.flat, axis=1))
        assert M.distance(got) <= best + 1e-9
        assert project(P, got).distance(got) <= 1e-9

    @settings(max_examples=100, deadline=None)
    @given(st.integers(0, 2 ** 31))
    def test_projection_lands_inside(self, seed):
        rng = np.random.default_rng(seed)
        pts = rng.normal(size=(6, 2, 2))
        P = ParamPolytope(tuple(LumpedParams.from_matrix(p, 1) for p in pts))
        M = LumpedParams.from_matrix(3 * rng.normal(size=(2, 2)), 1)
        assert contains(P, project(P, M), 1e-9)


class TestConvexCombine:
    def test_unit_vector(self, psi_box):
        for j in range(4):
            g = np.zeros(4)
            g[j] = 1.0
            assert convex_combine(psi_box, g) == psi_box.vertices[j]

    def test_uniform_is_centroid(self, psi_box):
        c = convex_combine(psi_box, np.full(4, 0.25))
        assert dynamics.c_coordinates(c) == pytest.approx((-2.5e-3, 5.0e-3), abs=1e-18)

    def test_negative_weight(self, psi_box):
        with pytest.raises(WeightError):
            convex_combine(psi_box, [1.5, -0.5, 0.0, 0.0])

    def test_sum_violation(self):
        with pytest.raises(WeightError):
            check_weights([0.5, 0.5 + 1e-10], 2)

    def test_random_combinations_contained(self, psi_box):
        rng = np.random.default_rng(7)
        tri = ParamPolytope(tuple(LumpedParams.from_matrix(rng.normal(size=(2, 3)), 2)
                                  for _ in range(5)))
        for P in (psi_box, tri):
            for g in rng.dirichlet(np.ones(P.q), size=1000):
                g = g / g.sum()
                assert contains(P, convex_combine(P, g), 1e-9)


class TestSampling:
    def test_default_is_vertices_plus_centroid(self, psi_box):
        out = sample_discrete(psi_box)
        assert len(out) == 5
        assert out[4] == psi_box.centroid()

    def test_random_is_seeded(self, psi_box):
        a = sample_discrete(psi_box, "random", count=3, seed=4)
        b = sample_discrete(psi_box, "random", count=3, seed=4)
        assert len(a) == 8 and all(x == y for x, y in zip(a, b))

    def test_box_polytope_corners(self):
        P = box_polytope([0.0, -1.0], [1.0, 1.0])
        assert [v.matrix.tolist() for v in P.vertices] == [
            [[0.0, -1.0]], [[1.0, -1.0]], [[0.0, 1.0]], [[1.0, 1.0]]]
