"""Polytope/ellipsoid/box geometry and the inclusion/intersection predicates."""

import numpy as np
import pytest

from nnreach.sets import (
    Box,
    Ellipsoid,
    Polytope,
    SetError,
    boundary_points_2d,
    bounding_box,
    box_to_polytope,
    contains_point,
    contains_points,
    includes,
    intersects,
    polytope_vertices,
    sample,
    set_from_json,
    set_to_json,
    support_value,
)


def random_bounded_polytope(rng, n=2, m=8) -> Polytope:
    """Random directions with offsets that keep the origin strictly inside."""
    a = rng.standard_normal((m, n))
    a /= np.linalg.norm(a, axis=1)[:, None]
    b = rng.uniform(0.5, 2.0, size=m)
    # ensure boundedness by adding the axis facets
    a = np.vstack([a, np.eye(n), -np.eye(n)])
    b = np.concatenate([b, np.full(2 * n, 3.0)])
    return Polytope(a, b)


class TestSupportValue:
    def test_unit_ball(self):
        ball = Ellipsoid(np.eye(2), np.zeros(2))
        assert support_value(ball, [3.0, 4.0]) == pytest.approx(5.0, abs=1e-12)

    def test_box(self):
        box = Box([-1.0, -1.0], [1.0, 1.0])
        assert support_value(box, [1.0, 1.0]) == pytest.approx(2.0, abs=0)

    def test_shifted_ellipsoid(self):
        # {x | ||A x + b|| <= 1} has center -A^{-1} b
        a = np.array([[2.0, 0.0], [0.0, 4.0]])
        b = np.array([-2.0, 0.0])  # center (1, 0), semi-axes 1/2 and 1/4
        ell = Ellipsoid(a, b)
        assert support_value(ell, [1.0, 0.0]) == pytest.approx(1.5, abs=1e-12)
        assert support_value(ell, [0.0, -1.0]) == pytest.approx(0.25, abs=1e-12)

    def test_polytope_matches_vertex_enumeration(self):
        rng = np.random.default_rng(5)
        poly = random_bounded_polytope(rng)
        verts = polytope_vertices(poly)
        assert len(verts) >= 3
        pts = sample(poly, 10000, rng)
        for d in rng.standard_normal((50, 2)):
            h = support_value(poly, d)
            assert h == pytest.approx(np.max(verts @ d), abs=1e-9)
            assert np.all(pts @ d <= h + 1e-9)

    def test_positive_homogeneity(self):
        rng = np.random.default_rng(6)
        sets = [
            Box([-1.0, 0.5], [2.0, 3.0]),
            Ellipsoid(np.array([[1.0, 0.2], [0.2, 2.0]]), np.array([0.3, -0.1])),
            random_bounded_polytope(rng),
        ]
        for s in sets:
            for d in rng.standard_normal((20, 2)):
                h = support_value(s, d)
                for alpha in (0.5, 2.0, 13.0):
                    assert support_value(s, alpha * d) == pytest.approx(
                        alpha * h, rel=1e-9, abs=1e-9
                    )

    def test_unbounded_direction_raises(self):
        half = Polytope(np.array([[1.0, 0.0]]), np.array([1.0]))
        with pytest.raises(SetError):
            support_value(half, [-1.0, 0.0])

    def test_zero_direction_gives_zero(self):
        assert support_value(Box([0.0], [1.0]), [0.0]) == 0.0


class TestIncludes:
    def test_ball_in_unit_box(self):
        ball = Ellipsoid(np.eye(2), np.zeros(2))
        assert includes(Box([-1.0, -1.0], [1.0, 1.0]), ball)

    def test_ball_not_in_small_box(self):
        ball = Ellipsoid(np.eye(2), np.zeros(2))
        assert not includes(Box([-0.5, -1.0], [1.0, 1.0]), ball)

    def test_shrunk_polytope_inside(self):
        rng = np.random.default_rng(7)
        poly = random_bounded_polytope(rng)
        inner = Polytope(poly.A, 0.9 * poly.b)
        assert includes(poly, inner)
        assert not includes(inner, poly)

    def test_self_inclusion(self):
        rng = np.random.default_rng(8)
        poly = random_bounded_polytope(rng)
        box = Box([-1.0, 2.0], [0.5, 4.0])
        assert includes(poly, poly)
        assert includes(box, box)

    def test_sampled_consistency(self):
        rng = np.random.default_rng(9)
        outer = random_bounded_polytope(rng)
        inner = Polytope(outer.A, 0.7 * outer.b)
        pts = sample(inner, 2000, rng)
        assert contains_points(outer, pts, tol=1e-9).all()


class TestIntersects:
    def test_separated_box(self):
        ball = Ellipsoid(np.eye(2), np.zeros(2))
        assert not intersects(ball, Box([2.0, 2.0], [3.0, 3.0]))

    def test_overlapping_box(self):
        ball = Ellipsoid(np.eye(2), np.zeros(2))
        assert intersects(ball, Box([-0.1, -0.1], [0.1, 0.1]))

    def test_common_point_witness(self):
        rng = np.random.default_rng(10)
        p = random_bounded_polytope(rng)
        q = random_bounded_polytope(rng)
        w = sample(p, 200, rng)
        inside_both = contains_points(q, w, tol=0.0)
        if inside_both.any():
            assert intersects(p, q)

    def test_touching_polytopes(self):
        left = Polytope(np.array([[1.0, 0.0], [-1.0, 0.0], [0.0, 1.0], [0.0, -1.0]]),
                        np.array([0.0, 1.0, 1.0, 1.0]))
        right = Polytope(np.array([[1.0, 0.0], [-1.0, 0.0], [0.0, 1.0], [0.0, -1.0]]),
                         np.array([1.0, 0.0, 1.0, 1.0]))
        assert intersects(left, right)  # share the segment x=0


class TestContainsPoint:
    def test_center_of_ball(self):
        assert contains_point(Ellipsoid(np.eye(2), np.zeros(2)), [0.0, 0.0])

    def test_tolerance_edge(self):
        ball = Ellipsoid(np.eye(2), np.zeros(2))
        assert contains_point(ball, [1.0 + 1e-6, 0.0], tol=1e-5)
        assert not contains_point(ball, [1.1, 0.0])

    def test_ellipsoid_center_always_inside(self):
        rng = np.random.default_rng(11)
        for _ in range(10):
            m = rng.standard_normal((2, 2))
            a = m @ m.T + 0.3 * np.eye(2)
            b = rng.standard_normal(2)
            ell = Ellipsoid(a, b)
            assert contains_point(ell, ell.center)


class TestSampling:
    def test_box_samples_inside(self):
        rng = np.random.default_rng(12)
        box = Box([-2.0, 1.0], [0.0, 4.0])
        pts = sample(box, 5000, rng)
        assert pts.shape == (5000, 2)
        assert contains_points(box, pts, tol=0.0).all()

    def test_ellipsoid_samples_inside(self):
        rng = np.random.default_rng(13)
        ell = Ellipsoid(np.array([[2.0, 0.1], [0.1, 1.0]]), np.array([0.5, -1.0]))
        pts = sample(ell, 5000, rng)
        assert contains_points(ell, pts, tol=1e-12).all()

    def test_sampling_fills_the_box(self):
        rng = np.random.default_rng(14)
        box = Box([0.0, 0.0], [1.0, 2.0])
        pts = sample(box, 20000, rng)
        assert np.min(pts[:, 0]) < 0.01 and np.max(pts[:, 0]) > 0.99
        assert np.min(pts[:, 1]) < 0.02 and np.max(pts[:, 1]) > 1.98


def test_bounding_box_matches_supports():
    rng = np.random.default_rng(15)
    poly = random_bounded_polytope(rng)
    bb = bounding_box(poly)
    for i in range(2):
        e = np.zeros(2)
        e[i] = 1.0
        assert bb.upper[i] == pytest.approx(support_value(poly, e), abs=1e-9)
        assert bb.lower[i] == pytest.approx(-support_value(poly, -e), abs=1e-9)


def test_box_to_polytope_round_trip():
    box = Box([-1.0, 2.0], [3.0, 5.0])
    poly = box_to_polytope(box)
    assert poly.A.shape == (4, 2)
    rng = np.random.default_rng(16)
    pts = rng.uniform(-2, 6, size=(2000, 2))
    want = contains_points(box, pts, tol=0.0)
    got = contains_points(poly, pts, tol=0.0)
    assert np.array_equal(want, got)


def test_polytope_vertices_of_box():
    poly = box_to_polytope(Box([0.0, 0.0], [2.0, 1.0]))
    verts = polytope_vertices(poly)
    want = {(0.0, 0.0), (2.0, 0.0), (0.0, 1.0), (2.0, 1.0)}
    got = {tuple(np.round(v, 12)) for v in verts}
    assert got == want


class TestBoundary2d:
    def test_polytope_projection_is_hull(self):
        poly = box_to_polytope(Box([0.0, 0.0], [2.0, 1.0]))
        pts = boundary_points_2d(poly, (0, 1))
        assert pts.shape[1] == 2
        assert np.max(pts[:, 0]) == pytest.approx(2.0, abs=1e-9)
        assert np.min(pts[:, 1]) == pytest.approx(0.0, abs=1e-9)

    def test_ellipse_projection_on_boundary(self):
        ell = Ellipsoid(np.diag([0.5, 2.0]), np.zeros(2))
        pts = boundary_points_2d(ell, (0, 1), n_arc=64)
        assert pts.shape == (64, 2)
        r = np.linalg.norm(pts @ np.diag([0.5, 2.0]).T, axis=1)
        assert r == pytest.approx(np.ones(64), abs=1e-9)

    def test_projected_3d_ellipsoid_covers_samples(self):
        rng = np.random.default_rng(17)
        m = rng.standard_normal((3, 3))
        a = m @ m.T + 0.5 * np.eye(3)
        ell = Ellipsoid(a, rng.standard_normal(3))
        pts = sample(ell, 4000, rng)[:, [0, 2]]
        ring = boundary_points_2d(ell, (0, 2), n_arc=256)
        # every sampled projection lies inside the projected boundary polygon
        center = ring.mean(axis=0)
        for d in np.stack([np.cos(t := np.linspace(0, 2 * np.pi, 32)), np.sin(t)]).T:
            h_ring = np.max((ring - center) @ d)
            h_pts = np.max((pts - center) @ d)
            assert h_pts <= h_ring + 1e-6


class TestJson:
    def test_round_trips(self):
        rng = np.random.default_rng(18)
        sets = [
            Box([-1.0, 0.0], [2.0, 3.0]),
            random_bounded_polytope(rng),
            Ellipsoid(np.array([[1.5, 0.2], [0.2, 0.9]]), np.array([0.1, -0.4])),
        ]
        for s in sets:
            back = set_from_json(set_to_json(s))
            assert type(back) is type(s)
            for d in rng.standard_normal((10, 2)):
                assert support_value(back, d) == pytest.approx(
                    support_value(s, d), abs=1e-12
                )

    def test_unknown_type_rejected(self):
        with pytest.raises(SetError):
            set_from_json({"type": "zonotope"})


def test_validation_errors():
    with pytest.raises(SetError):
        Box([1.0], [0.0])
    with pytest.raises(SetError):
        Polytope(np.zeros((1, 2)), np.array([1.0]))  # zero facet row
    with pytest.raises(SetError):
        Ellipsoid(np.zeros((2, 2)), np.zeros(2))  # singular shape
    with pytest.raises(SetError):
        Ellipsoid(np.array([[1.0, 0.5], [0.0, 1.0]]), np.zeros(2))  # asymmetric
