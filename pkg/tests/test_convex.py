"""Projection onto per-epsilon convex sets: closed forms, Dykstra, checks."""

import numpy as np
import pytest
from numpy.testing import assert_allclose

import _oracles
from gennet import (
    ConvexSetNet,
    DimMismatch,
    EmptySet,
    EpsGrid,
    GenVector,
    NumericPolicy,
    ProbeNotInSet,
    characterization_residual,
    midpoint_closure_check,
    project_point,
)

GRID = EpsGrid.geometric(24)
POLICY = NumericPolicy()

NONEXPANSIVE_SLACK = 1e-12
CHARACTERIZATION_TOL = 1e-10
N_PAIRS = 100
N_FEASIBLE = 50


def _random_point(rng, d):
    return GenVector(GRID, 3.0 * rng.standard_normal((GRID.K, d)))


def _random_set(rng, d):
    kind = rng.choice(["box", "obstacle", "affine", "halfspaces"])
    if kind == "box":
        lo = rng.uniform(-2.0, 0.0, d)
        return ConvexSetNet.box(GRID, lo, lo + rng.uniform(0.5, 3.0, d)), kind
    if kind == "obstacle":
        return ConvexSetNet.obstacle(GRID, rng.uniform(-1.0, 1.0, d)), kind
    if kind == "affine":
        r = int(rng.integers(1, d + 1))
        return ConvexSetNet.affine(GRID, rng.standard_normal((r, d)),
                                   rng.standard_normal(d)), kind
    rows = rng.standard_normal((max(2, d - 1), d))
    offsets = rng.uniform(0.5, 2.0, rows.shape[0])  # all contain the origin
    return ConvexSetNet.halfspaces(GRID, rows, offsets), kind


def _feasible_point(rng, C, kind, d):
    if kind == "box":
        lo, up = C.data["lower"][0], C.data["upper"][0]
        return GenVector.constant(rng.uniform(lo, up), GRID)
    if kind == "obstacle":
        lo = C.data["lower"][0]
        return GenVector.constant(lo + rng.uniform(0.0, 2.0, d), GRID)
    if kind == "affine":
        t = rng.standard_normal(C.data["basis"].shape[1])
        pts = C.data["offset"] + np.einsum("krd,r->kd", C.data["basis"], t)
        return GenVector(GRID, pts)
    # halfspaces as drawn all contain a ball around the origin
    x = rng.standard_normal(d)
    x *= rng.uniform(0.0, 0.4) / max(1.0, np.linalg.norm(x))
    return GenVector.constant(x, GRID)


class TestClosedForms:
    def test_box_matches_clip_oracle(self):
        rng = np.random.default_rng(23)
        lo, up = np.array([-1.0, 0.0, 2.0]), np.array([1.0, 0.5, 2.0])
        C = ConvexSetNet.box(GRID, lo, up)
        u = _random_point(rng, 3)
        p = project_point(C, u, POLICY)
        assert_allclose(p.samples, _oracles.project_box(u.samples, lo, up))

    def test_obstacle_matches_max_oracle(self):
        rng = np.random.default_rng(29)
        lo = np.array([0.0, -2.0])
        C = ConvexSetNet.obstacle(GRID, lo)
        u = _random_point(rng, 2)
        p = project_point(C, u, POLICY)
        assert_allclose(p.samples, _oracles.project_obstacle(u.samples, lo))

    def test_affine_matches_lstsq_oracle(self):
        rng = np.random.default_rng(31)
        span = rng.standard_normal((2, 5))
        offset = rng.standard_normal(5)
        C = ConvexSetNet.affine(GRID, span, offset)
        u = _random_point(rng, 5)
        p = project_point(C, u, POLICY)
        for k in range(GRID.K):
            assert_allclose(p.samples[k],
                            _oracles.project_affine(u.samples[k], span, offset),
                            atol=1e-10)

    def test_affine_handles_rank_deficient_span(self):
        span = np.array([[1.0, 1.0, 0.0],
                         [2.0, 2.0, 0.0]])  # rank 1
        C = ConvexSetNet.affine(GRID, span)
        u = GenVector.constant(np.array([1.0, 0.0, 3.0]), GRID)
        p = project_point(C, u, POLICY)
        assert_allclose(p.samples[0], np.array([0.5, 0.5, 0.0]), atol=1e-12)

    def test_halfspace_single_matches_formula(self):
        # one halfspace x + y <= 1: projection moves along the normal
        C = ConvexSetNet.halfspaces(GRID, np.array([[1.0, 1.0]]), np.array([1.0]))
        u = GenVector.constant(np.array([1.0, 1.0]), GRID)
        p = project_point(C, u, POLICY)
        assert_allclose(p.samples[0], np.array([0.5, 0.5]), atol=1e-12)


class TestProjectionProperties:
    def test_nonexpansive_idempotent_minimal(self):
        rng = np.random.default_rng(37)
        for _ in range(N_PAIRS):
            d = int(rng.integers(1, 9))
            C, kind = _random_set(rng, d)
            u, v = _random_point(rng, d), _random_point(rng, d)
            pu, pv = project_point(C, u, POLICY), project_point(C, v, POLICY)
            gap = np.linalg.norm(pu.samples - pv.samples, axis=1)
            bound = np.linalg.norm(u.samples - v.samples, axis=1)
            assert np.all(gap <= bound + NONEXPANSIVE_SLACK * (1.0 + bound))

            ppu = project_point(C, pu, POLICY)
            assert np.allclose(ppu.samples, pu.samples, atol=1e-10)

            dist = np.linalg.norm(u.samples - pu.samples, axis=1)
            w = _feasible_point(rng, C, kind, d)
            alt = np.linalg.norm(u.samples - w.samples, axis=1)
            assert np.all(dist <= alt + 1e-10)

    def test_minimality_many_competitors(self):
        rng = np.random.default_rng(41)
        d = 4
        C, kind = _random_set(rng, d)
        u = _random_point(rng, d)
        pu = project_point(C, u, POLICY)
        dist = np.linalg.norm(u.samples - pu.samples, axis=1)
        for _ in range(N_FEASIBLE):
            w = _feasible_point(rng, C, kind, d)
            alt = np.linalg.norm(u.samples - w.samples, axis=1)
            assert np.all(dist <= alt + 1e-10)

    def test_characterization_residual_nonpositive(self):
        rng = np.random.default_rng(43)
        for _ in range(20):
            d = int(rng.integers(1, 6))
            C, kind = _random_set(rng, d)
            u = _random_point(rng, d)
            v = project_point(C, u, POLICY)
            probes = [_feasible_point(rng, C, kind, d) for _ in range(10)]
            res = characterization_residual(C, u, v, probes, POLICY)
            scale = 1.0 + np.linalg.norm(u.samples, axis=1)
            assert np.all(res.samples <= CHARACTERIZATION_TOL * scale)

    def test_characterization_flags_wrong_projection(self):
        C = ConvexSetNet.box(GRID, np.array([0.0]), np.array([1.0]))
        u = GenVector.constant(np.array([2.0]), GRID)
        not_proj = GenVector.constant(np.array([0.25]), GRID)
        probes = [GenVector.constant(np.array([1.0]), GRID)]
        res = characterization_residual(C, u, not_proj, probes, POLICY)
        assert np.all(res.samples > 0.1)  # strictly positive: 1.75 * 0.75

    def test_probe_outside_set_raises(self):
        C = ConvexSetNet.box(GRID, np.array([0.0]), np.array([1.0]))
        u = GenVector.constant(np.array([0.5]), GRID)
        bad = GenVector.constant(np.array([5.0]), GRID)
        with pytest.raises(ProbeNotInSet):
            characterization_residual(C, u, u, [bad], POLICY)

    def test_affine_projection_residual_orthogonal_to_span(self):
        rng = np.random.default_rng(47)
        span = rng.standard_normal((3, 6))
        C = ConvexSetNet.affine(GRID, span)
        u = _random_point(rng, 6)
        p = project_point(C, u, POLICY)
        resid = u.samples - p.samples
        for b in span:
            assert np.all(np.abs(resid @ b) <= 1e-10 *
                          (1.0 + np.linalg.norm(u.samples, axis=1)))


class TestDykstra:
    def test_matches_box_encoded_as_halfspaces(self):
        rng = np.random.default_rng(53)
        lo, up = np.array([-1.0, -0.5]), np.array([0.5, 1.0])
        box = ConvexSetNet.box(GRID, lo, up)
        rows = np.vstack([np.eye(2), -np.eye(2)])
        offs = np.concatenate([up, -lo])
        poly = ConvexSetNet.halfspaces(GRID, rows, offs)
        u = _random_point(rng, 2)
        p_box = project_point(box, u, POLICY)
        p_poly = project_point(poly, u, POLICY)
        assert np.allclose(p_poly.samples, p_box.samples, atol=1e-9)

    def test_simplex_corner(self):
        # x, y >= 0, x + y <= 1; project (2, 2) -> nearest point (0.5, 0.5)
        rows = np.array([[-1.0, 0.0], [0.0, -1.0], [1.0, 1.0]])
        offs = np.array([0.0, 0.0, 1.0])
        C = ConvexSetNet.halfspaces(GRID, rows, offs)
        u = GenVector.constant(np.array([2.0, 2.0]), GRID)
        p = project_point(C, u, POLICY)
        assert np.allclose(p.samples, 0.5, atol=1e-9)


class TestMidpointClosure:
    def test_convex_kinds_pass(self):
        rng = np.random.default_rng(59)
        for _ in range(10):
            d = int(rng.integers(1, 5))
            C, kind = _random_set(rng, d)
            pairs = [(_feasible_point(rng, C, kind, d),
                      _feasible_point(rng, C, kind, d)) for _ in range(5)]
            assert midpoint_closure_check(C, pairs, POLICY)

    def test_two_disjoint_boxes_fail(self):
        # stacking both boxes' halfspace rows leaves an empty intersection;
        # cross-box midpoints expose it
        rows = np.vstack([np.eye(1), -np.eye(1), np.eye(1), -np.eye(1)])
        offs = np.array([1.0, 0.0, 3.0, -2.0])  # [0,1] and [2,3]
        C = ConvexSetNet.halfspaces(GRID, rows, offs)
        a = GenVector.constant(np.array([0.5]), GRID)
        b = GenVector.constant(np.array([2.5]), GRID)
        assert not midpoint_closure_check(C, [(a, b)], POLICY)


class TestValidation:
    def test_empty_box_raises(self):
        with pytest.raises(EmptySet):
            ConvexSetNet.box(GRID, np.array([1.0]), np.array([0.0]))

    def test_infinite_obstacle_bound_raises(self):
        with pytest.raises(EmptySet):
            ConvexSetNet.obstacle(GRID, np.array([np.inf]))

    def test_dim_mismatch_on_projection(self):
        C = ConvexSetNet.box(GRID, np.array([0.0]), np.array([1.0]))
        u = GenVector.constant(np.array([0.0, 0.0]), GRID)
        with pytest.raises(DimMismatch):
            project_point(C, u, POLICY)

    def test_batched_projector_kinds(self):
        box = ConvexSetNet.box(GRID, np.array([0.0]), np.array([1.0]))
        obs = ConvexSetNet.obstacle(GRID, np.array([0.0]))
        aff = ConvexSetNet.affine(GRID, np.array([[1.0, 0.0]]))
        assert box.batched_projector() is not None
        assert obs.batched_projector() is not None
        assert aff.batched_projector() is None
