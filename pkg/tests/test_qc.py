"""Quadratic-constraint forms: hand-checked matrices, nonnegativity on true
forward passes, and the selector-map identities that tie the shared basis to
network and plant coordinates."""

import numpy as np
import pytest

from nnreach import qc
from nnreach.network import evaluate, random_network
from nnreach.qc import (
    BasisLayout,
    QcError,
    ReluMultipliers,
    basis_vector,
    ellipsoid_qc,
    ellipsoid_template,
    facet_template,
    input_map,
    lift,
    output_map,
    pair_list,
    polytope_qc,
    relu_map,
    relu_qc,
    sector_qc,
    slope_qc,
)


class TestSectorForms:
    def test_relu_sector_matrix(self):
        m = sector_qc(0.0, 1.0).M
        assert np.array_equal(m, np.array([[0.0, 1.0], [1.0, -2.0]]))

    def test_degenerate_sector_is_squared_difference(self):
        m = sector_qc(1.0, 1.0).M
        assert np.array_equal(m, np.array([[-2.0, 2.0], [2.0, -2.0]]))
        for y in (-2.0, 0.0, 3.5):
            v = np.array([y, y])
            assert v @ m @ v == pytest.approx(0.0, abs=1e-12)

    def test_nonnegative_on_relu_graph(self):
        m = sector_qc(0.0, 1.0).M
        for y in np.linspace(-3, 3, 101):
            v = np.array([y, max(y, 0.0)])
            assert v @ m @ v >= -1e-12

    def test_reversed_sector_rejected(self):
        with pytest.raises(QcError):
            sector_qc(1.0, 0.0)

    def test_slope_uses_same_matrix(self):
        assert np.array_equal(slope_qc(0.0, 1.0).M, sector_qc(0.0, 1.0).M)


class TestReluStack:
    def test_single_unit_matrix(self):
        mult = ReluMultipliers(lam=[1.0], nu=[0.0], eta=[0.0])
        want = np.array([[0.0, 1.0, 0.0], [1.0, -2.0, 0.0], [0.0, 0.0, 0.0]])
        assert np.array_equal(relu_qc(mult).M, want)

    def test_complementarity_exact_zero(self):
        mult = ReluMultipliers(lam=[3.0, -2.0], nu=[0.0, 0.0], eta=[0.0, 0.0])
        q = relu_qc(mult).M
        for y in np.random.default_rng(0).standard_normal((50, 2)):
            v = np.concatenate([y, np.maximum(y, 0.0), [1.0]])
            assert v @ q @ v == pytest.approx(0.0, abs=1e-12)

    def test_pair_coupling_matrix(self):
        mult = ReluMultipliers(lam=[1.0, 2.0], nu=[0.0, 0.0], eta=[0.0, 0.0], pair=[3.0])
        q = relu_qc(mult).M
        t = np.array([[4.0, -3.0], [-3.0, 5.0]])
        assert np.array_equal(q[:2, 2:4], t)
        assert np.array_equal(q[2:4, 2:4], -2.0 * t)

    def test_pair_list_order(self):
        assert pair_list(3) == [(0, 1), (0, 2), (1, 2)]
        assert pair_list(1) == []

    def test_fuzz_nonnegative_on_relu(self):
        rng = np.random.default_rng(42)
        for _ in range(20):
            d = int(rng.integers(1, 6))
            mult = ReluMultipliers(
                lam=rng.standard_normal(d),
                nu=rng.uniform(0, 2, d),
                eta=rng.uniform(0, 2, d),
                pair=rng.uniform(0, 2, d * (d - 1) // 2),
            )
            q = relu_qc(mult).M
            y = rng.standard_normal((1000, d)) * 3
            v = np.hstack([y, np.maximum(y, 0.0), np.ones((1000, 1))])
            vals = np.einsum("ni,ij,nj->n", v, q, v)
            assert vals.min() >= -1e-9

    def test_zeros_constructor(self):
        z = ReluMultipliers.zeros(3, with_pairs=True)
        assert z.count == 3
        assert z.pair.shape == (3,)
        assert np.array_equal(relu_qc(z).M, np.zeros((7, 7)))

    def test_multiplier_validation(self):
        with pytest.raises(QcError, match="nu"):
            ReluMultipliers(lam=[1.0], nu=[-1.0], eta=[0.0])
        with pytest.raises(QcError, match="eta"):
            ReluMultipliers(lam=[1.0], nu=[0.0], eta=[-0.5])
        with pytest.raises(QcError, match="pair"):
            ReluMultipliers(lam=[1.0, 1.0], nu=[0.0, 0.0], eta=[0.0, 0.0], pair=[1.0, 2.0])
        with pytest.raises(QcError, match="pair"):
            ReluMultipliers(lam=[1.0, 1.0], nu=[0.0, 0.0], eta=[0.0, 0.0], pair=[-1.0])


class TestInputSetForms:
    def test_interval_cross_term(self):
        p = polytope_qc([[1.0], [-1.0]], [1.0, 1.0], [[0.0, 1.0], [1.0, 0.0]])
        assert np.array_equal(p.M, np.array([[-2.0, 0.0], [0.0, 2.0]]))

    def test_polytope_nonnegative_inside(self):
        rng = np.random.default_rng(1)
        a = np.vstack([np.eye(2), -np.eye(2), rng.standard_normal((3, 2))])
        b = np.concatenate([np.full(4, 2.0), rng.uniform(1, 3, 3)])
        g = rng.uniform(0, 1, (7, 7))
        g = g + g.T
        q = polytope_qc(a, b, g).M
        # rejection-sample points satisfying a x <= b
        pts = rng.uniform(-2, 2, (5000, 2))
        pts = pts[np.all(pts @ a.T <= b, axis=1)]
        assert len(pts) > 100
        v = np.hstack([pts, np.ones((len(pts), 1))])
        assert np.einsum("ni,ij,nj->n", v, q, v).min() >= -1e-9

    def test_unit_ball_form(self):
        e = ellipsoid_qc(np.eye(2), np.zeros(2), 1.0)
        assert np.array_equal(e.M, np.diag([-1.0, -1.0, 1.0]))

    def test_ellipsoid_nonnegative_inside(self):
        rng = np.random.default_rng(2)
        m = rng.standard_normal((2, 2))
        a = m @ m.T + 0.5 * np.eye(2)
        b = rng.standard_normal(2)
        q = ellipsoid_qc(a, b, 2.5).M
        pts = rng.standard_normal((5000, 2))
        pts = pts[np.linalg.norm(pts @ a.T + b, axis=1) <= 1.0]
        assert len(pts) > 50
        v = np.hstack([pts, np.ones((len(pts), 1))])
        assert np.einsum("ni,ij,nj->n", v, q, v).min() >= -1e-9

    def test_gamma_validation(self):
        with pytest.raises(QcError, match="symmetric"):
            polytope_qc(np.eye(2), np.ones(2), [[0.0, 1.0], [0.0, 0.0]])
        with pytest.raises(QcError, match="nonnegative"):
            polytope_qc(np.eye(2), np.ones(2), [[0.0, -1.0], [-1.0, 0.0]])
        with pytest.raises(QcError, match="mu"):
            ellipsoid_qc(np.eye(2), np.zeros(2), -0.1)


class TestTemplates:
    def test_facet_sign(self):
        s = facet_template([1.0, 0.0], 2.0).M
        for x, expect_inside in [(1.9, True), (2.0, True), (2.1, False)]:
            v = np.array([x, 0.0, 1.0])
            val = v @ s @ v
            assert (val <= 1e-12) == expect_inside

    def test_ellipsoid_sign(self):
        a = np.diag([0.5, 1.0])
        s = ellipsoid_template(a, np.zeros(2)).M
        inside = np.array([1.0, 0.5, 1.0])
        outside = np.array([3.0, 0.0, 1.0])
        assert inside @ s @ inside <= 0.0
        assert outside @ s @ outside > 0.0


def _stack_residual(e_mid, v, d):
    yz = e_mid @ v
    return np.maximum(yz[:d], 0.0) - yz[d : 2 * d]


class TestSelectorMaps:
    def test_input_map_identity(self):
        net = random_network((2, 4, 3, 1), seed=3)
        layout = BasisLayout.from_network(net, projected=True)
        v = basis_vector(layout, net, [0.3, -0.7], lower=[-1.0], upper=[1.0])
        e = input_map(layout)
        assert np.array_equal(e @ v, np.array([0.3, -0.7, 1.0]))

    @pytest.mark.parametrize("projected", [False, True])
    def test_relu_map_consistency(self, projected):
        net = random_network((2, 5, 4, 2), seed=4)
        layout = BasisLayout.from_network(net, projected=projected)
        lo, hi = (np.array([-0.5, -0.5]), np.array([0.5, 0.5])) if projected else (None, None)
        e = relu_map(layout, net, lower=lo, upper=hi)
        rng = np.random.default_rng(5)
        for x in rng.standard_normal((50, 2)):
            v = basis_vector(layout, net, x, lower=lo, upper=hi)
            res = _stack_residual(e, v, layout.relu_count)
            assert np.max(np.abs(res)) < 1e-10
            assert (e @ v)[-1] == 1.0

    def test_output_map_projected(self, di_system):
        net = random_network((2, 4, 1), seed=6)
        layout = BasisLayout.from_network(net, projected=True)
        step = di_system.step_at(0)
        e = output_map(layout, step.A, step.B, step.c)
        rng = np.random.default_rng(7)
        for x in rng.standard_normal((50, 2)) * 2:
            v = basis_vector(layout, net, x, lower=step.u_lower, upper=step.u_upper)
            u = np.clip(evaluate(net, x), step.u_lower, step.u_upper)
            want = step.A @ x + step.B @ u + step.c
            assert e @ v == pytest.approx(np.concatenate([want, [1.0]]), abs=1e-12)

    def test_output_map_unprojected_needs_network(self, di_system):
        net = random_network((2, 4, 1), seed=8)
        layout = BasisLayout.from_network(net, projected=False)
        step = di_system.step_at(0)
        with pytest.raises(QcError, match="output layer"):
            output_map(layout, step.A, step.B, step.c)
        e = output_map(layout, step.A, step.B, step.c, net=net)
        x = np.array([0.4, -1.2])
        v = basis_vector(layout, net, x)
        want = step.A @ x + step.B @ evaluate(net, x) + step.c
        assert e @ v == pytest.approx(np.concatenate([want, [1.0]]), abs=1e-12)

    def test_projected_basis_needs_bounds(self):
        net = random_network((2, 3, 1), seed=9)
        layout = BasisLayout.from_network(net, projected=True)
        with pytest.raises(QcError, match="bounds"):
            basis_vector(layout, net, [0.0, 0.0])

    def test_crossed_clamp_bounds_rejected(self):
        net = random_network((2, 3, 1), seed=10)
        layout = BasisLayout.from_network(net, projected=True)
        with pytest.raises(QcError, match="lower <= upper"):
            relu_map(layout, net, lower=[1.0], upper=[-1.0])

    def test_layout_dimensions(self):
        net = random_network((3, 8, 6, 2), seed=11)
        proj = BasisLayout.from_network(net, projected=True)
        flat = BasisLayout.from_network(net, projected=False)
        assert proj.dim == 3 + 8 + 6 + 2 + 2 + 1
        assert flat.dim == 3 + 8 + 6 + 1
        assert proj.relu_count == 14 + 4
        assert flat.relu_count == 14
        assert proj.block_slice(0) == slice(0, 3)
        assert proj.const_index == proj.dim - 1

    def test_layout_network_mismatch(self):
        net = random_network((2, 4, 1), seed=12)
        other = random_network((2, 5, 1), seed=12)
        layout = BasisLayout.from_network(net)
        with pytest.raises(QcError, match="match"):
            relu_map(layout, other, lower=[-1.0], upper=[1.0])


class TestLift:
    def test_congruence_two_paths(self):
        rng = np.random.default_rng(13)
        q = qc.QcMatrix(rng.standard_normal((3, 3)), "native")
        e = rng.standard_normal((3, 6))
        lifted = lift(q, e)
        for v in rng.standard_normal((20, 6)):
            assert v @ lifted.M @ v == pytest.approx((e @ v) @ q.M @ (e @ v), rel=1e-12, abs=1e-12)

    def test_sign_preserved_on_range(self):
        # nonnegativity of the native form carries over to lifted evaluations
        p = polytope_qc([[1.0], [-1.0]], [1.0, 1.0], [[0.0, 1.0], [1.0, 0.0]])
        e = np.array([[0.5, 0.0, 0.0], [0.0, 0.0, 1.0]])  # [x;1] = [v0/2; 1]
        lifted = lift(p, e)
        for v0 in np.linspace(-2, 2, 41):  # maps into [-1, 1]
            v = np.array([v0, 9.9, 1.0])
            assert v @ lifted.M @ v >= -1e-12

    def test_dimension_mismatch(self):
        q = sector_qc(0.0, 1.0)
        with pytest.raises(QcError, match="rows"):
            lift(q, np.zeros((3, 5)))


def test_qc_matrix_symmetrized():
    m = qc.QcMatrix([[0.0, 2.0], [0.0, 0.0]], "native")
    assert np.array_equal(m.M, np.array([[0.0, 1.0], [1.0, 0.0]]))
    with pytest.raises(QcError, match="square"):
        qc.QcMatrix(np.zeros((2, 3)), "native")
