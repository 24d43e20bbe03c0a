"""Linear time-varying plant, closed loop, discretization, simulation oracle."""

import json
import math

import numpy as np
import pytest

from conftest import box_support, linear_net, lqr_gain, make_di_system
from nnreach.dynamics import (
    ClosedLoop,
    DynamicsError,
    LtvStep,
    LtvSystem,
    c2d_exact,
    closed_loop_step,
    simulate_batch,
    step,
    system_from_json,
    system_to_json,
)
from nnreach.network import FeedforwardNetwork, random_network
from nnreach.sets import Box, Polytope, contains_points


def test_double_integrator_step():
    sys2 = make_di_system()
    assert step(sys2, 0, [1.0, 0.0], [1.0]) == pytest.approx([1.5, 1.0], abs=0)


def test_identity_step():
    s = LtvStep(np.eye(3), np.zeros((3, 1)), np.zeros(3), [-1.0], [1.0])
    sys3 = LtvSystem(steps=(s,))
    x = np.array([0.3, -0.4, 2.0])
    assert np.array_equal(step(sys3, 5, x, [0.7]), x)


def test_step_matches_independent_product():
    rng = np.random.default_rng(17)
    for _ in range(20):
        n, m = rng.integers(1, 5), rng.integers(1, 4)
        a = rng.standard_normal((n, n))
        b = rng.standard_normal((n, m))
        c = rng.standard_normal(n)
        x = rng.standard_normal(n)
        u = rng.standard_normal(m)
        s = LtvStep(a, b, c, -np.full(m, np.inf), np.full(m, np.inf))
        sysn = LtvSystem(steps=(s,))
        want = np.array(
            [
                sum(a[i, j] * x[j] for j in range(n))
                + sum(b[i, j] * u[j] for j in range(m))
                + c[i]
                for i in range(n)
            ]
        )
        assert step(sysn, 0, x, u) == pytest.approx(want, abs=1e-14)


class TestClosedLoopStep:
    def test_zero_network_keeps_plant_affine(self):
        sys2 = make_di_system()
        net = random_network((2, 4, 1), seed=0, weight_scale=0.0)
        loop = ClosedLoop(system=sys2, network=net)
        x = np.array([2.0, -0.5])
        want = sys2.steps[0].A @ x
        assert closed_loop_step(loop, 0, x) == pytest.approx(want, abs=0)

    def test_constant_output_saturates(self):
        sys2 = make_di_system(u_lower=(-1.0,), u_upper=(1.0,))
        w0 = np.zeros((2, 2))
        w1 = np.zeros((1, 2))
        net = FeedforwardNetwork(
            weights=(w0, w1), biases=(np.zeros(2), np.array([5.0]))
        )
        loop = ClosedLoop(system=sys2, network=net)
        x = np.array([1.0, 0.0])
        s = sys2.steps[0]
        assert closed_loop_step(loop, 0, x) == pytest.approx(
            s.A @ x + s.B @ [1.0], abs=0
        )

    def test_manual_composition(self, di_net):
        sys2 = make_di_system()
        loop = ClosedLoop(system=sys2, network=di_net)
        x = np.array([2.75, 0.0])
        h = x
        for w, b in zip(di_net.weights[:-1], di_net.biases[:-1]):
            h = np.maximum(w @ h + b, 0.0)
        u = np.clip(di_net.weights[-1] @ h + di_net.biases[-1], -1.0, 1.0)
        s = sys2.steps[0]
        assert closed_loop_step(loop, 0, x) == pytest.approx(
            s.A @ x + s.B @ u + s.c, abs=1e-12
        )


class TestSimulateBatch:
    def test_singleton_gives_exact_trajectory(self, lqr_loop):
        x0 = np.array([2.7, 0.1])
        init = Box(x0, x0)
        clouds = simulate_batch(lqr_loop, init, 4, 1, seed=0)
        x = x0
        for t in range(5):
            assert clouds[t][0] == pytest.approx(x, abs=1e-12)
            if t < 4:
                x = closed_loop_step(lqr_loop, t, x)

    def test_zero_steps_returns_initial_cloud(self, lqr_loop):
        init = Box([2.5, -0.25], [3.0, 0.25])
        clouds = simulate_batch(lqr_loop, init, 0, 200, seed=1)
        assert len(clouds) == 1
        assert contains_points(init, clouds[0], tol=0.0).all()

    def test_linear_loop_matches_closed_form(self, lqr_loop):
        k = lqr_gain()
        s = lqr_loop.system.steps[0]
        m = s.A - s.B @ k
        init = Box([2.5, -0.25], [3.0, 0.25])
        clouds = simulate_batch(lqr_loop, init, 6, 300, seed=2)
        x0 = clouds[0]
        power = np.eye(2)
        for t in range(7):
            assert clouds[t] == pytest.approx(x0 @ power.T, abs=1e-9)
            power = m @ power

    def test_clouds_are_elementwise_images(self, di_net):
        loop = ClosedLoop(system=make_di_system(), network=di_net)
        init = Box([2.5, -0.25], [3.0, 0.25])
        clouds = simulate_batch(loop, init, 3, 50, seed=3)
        for t in range(3):
            want = closed_loop_step(loop, t, clouds[t])
            assert np.array_equal(clouds[t + 1], want)

    def test_deterministic_per_seed(self, lqr_loop):
        init = Box([2.5, -0.25], [3.0, 0.25])
        a = simulate_batch(lqr_loop, init, 2, 64, seed=9)
        b = simulate_batch(lqr_loop, init, 2, 64, seed=9)
        for x, y in zip(a, b):
            assert np.array_equal(x, y)

    def test_polytope_sampling_stays_inside(self, lqr_loop):
        tri = Polytope(
            A=np.array([[1.0, 0.0], [0.0, 1.0], [-1.0, -1.0]]),
            b=np.array([1.0, 1.0, 0.5]),
        )
        clouds = simulate_batch(lqr_loop, tri, 0, 500, seed=4)
        assert contains_points(tri, clouds[0], tol=1e-12).all()

    def test_rejects_bad_arguments(self, lqr_loop):
        init = Box([0.0, 0.0], [1.0, 1.0])
        with pytest.raises(DynamicsError):
            simulate_batch(lqr_loop, init, -1, 10, seed=0)
        with pytest.raises(DynamicsError):
            simulate_batch(lqr_loop, init, 1, 0, seed=0)


class TestC2dExact:
    def test_nilpotent_quadrotor_blocks(self):
        a_c = np.block(
            [[np.zeros((3, 3)), np.eye(3)], [np.zeros((3, 3)), np.zeros((3, 3))]]
        )
        g = 9.81
        b_c = np.zeros((6, 3))
        b_c[3, 0] = g
        b_c[4, 1] = -g
        b_c[5, 2] = 1.0
        a_d, b_d, c_d = c2d_exact(a_c, b_c, None, 0.1)
        assert a_d == pytest.approx(np.eye(6) + 0.1 * a_c, abs=0)
        assert b_d == pytest.approx((0.1 * np.eye(6) + 0.005 * a_c) @ b_c, abs=1e-15)
        assert np.array_equal(c_d, np.zeros(6))

    def test_zero_matrix(self):
        b = np.array([[1.0], [2.0]])
        c = np.array([3.0, -1.0])
        a_d, b_d, c_d = c2d_exact(np.zeros((2, 2)), b, c, 0.25)
        assert np.array_equal(a_d, np.eye(2))
        assert b_d == pytest.approx(0.25 * b, abs=1e-16)
        assert c_d == pytest.approx(0.25 * c, abs=1e-16)

    def test_scalar_matches_exponential(self):
        for a in (-2.0, -0.3, 0.0, 0.7, 1.9):
            a_d, b_d, _ = c2d_exact([[a]], [[1.0]], None, 1.0)
            assert a_d[0, 0] == pytest.approx(math.exp(a), abs=1e-12)
            want_b = (math.exp(a) - 1.0) / a if a != 0 else 1.0
            assert b_d[0, 0] == pytest.approx(want_b, abs=1e-12)

    def test_rotation_matches_closed_form(self):
        w = 1.3
        a_c = np.array([[0.0, -w], [w, 0.0]])
        a_d, _, _ = c2d_exact(a_c, np.zeros((2, 1)), None, 0.5)
        th = w * 0.5
        want = np.array(
            [[math.cos(th), -math.sin(th)], [math.sin(th), math.cos(th)]]
        )
        assert a_d == pytest.approx(want, abs=1e-12)

    def test_rejects_bad_sampling_time(self):
        with pytest.raises(DynamicsError):
            c2d_exact(np.eye(2), np.zeros((2, 1)), None, 0.0)


class TestJsonRoundTrip:
    def test_single_step_system(self):
        sys2 = make_di_system()
        doc = system_to_json(sys2)
        back = system_from_json(doc)
        assert np.array_equal(back.steps[0].A, sys2.steps[0].A)
        assert np.array_equal(back.steps[0].B, sys2.steps[0].B)
        assert back.repeat

    def test_infinite_bounds_serialize_as_null(self):
        inf = np.array([np.inf])
        sys2 = make_di_system(u_lower=-inf, u_upper=inf)
        doc = system_to_json(sys2)
        blob = json.dumps(doc)  # must be strict JSON: no Infinity tokens
        assert "Infinity" not in blob
        back = system_from_json(json.loads(blob))
        assert back.steps[0].u_lower[0] == -np.inf
        assert back.steps[0].u_upper[0] == np.inf

    def test_time_varying_list(self):
        s0 = LtvStep(np.eye(2), np.ones((2, 1)), np.zeros(2), [-1.0], [1.0])
        s1 = LtvStep(2 * np.eye(2), np.ones((2, 1)), np.ones(2), [-2.0], [2.0])
        sys2 = LtvSystem(steps=(s0, s1), repeat=False)
        back = system_from_json(system_to_json(sys2))
        assert not back.repeat
        assert back.horizon_limit() == 2
        assert np.array_equal(back.steps[1].A, 2 * np.eye(2))
        assert np.array_equal(back.step_at(1).c, np.ones(2))
        with pytest.raises(DynamicsError):
            back.step_at(2)


def test_validation_errors():
    with pytest.raises(DynamicsError):
        LtvStep(np.eye(2), np.zeros((2, 1)), np.zeros(2), [1.0], [-1.0])
    with pytest.raises(DynamicsError):
        LtvStep(np.eye(2), np.zeros((3, 1)), np.zeros(2), [-1.0], [1.0])
    with pytest.raises(DynamicsError):
        LtvSystem(steps=())
    sys2 = make_di_system()
    with pytest.raises(DynamicsError):
        step(sys2, 0, [1.0, 2.0, 3.0], [0.0])
    with pytest.raises(DynamicsError):
        ClosedLoop(system=sys2, network=random_network((3, 4, 1), seed=0))


def test_horizon_limit_enforced():
    s = LtvStep(np.eye(2), np.zeros((2, 1)), np.zeros(2), [-1.0], [1.0])
    sys2 = LtvSystem(steps=(s, s), repeat=False)
    loop = ClosedLoop(system=sys2, network=random_network((2, 3, 1), seed=0))
    init = Box([0.0, 0.0], [1.0, 1.0])
    with pytest.raises(DynamicsError, match="horizon"):
        simulate_batch(loop, init, 3, 10, seed=0)


def test_box_support_helper_is_consistent():
    # the shared oracle used by other test files, sanity-checked here
    assert box_support([-1, -1], [1, 1], [1, 1]) == pytest.approx(2.0)
    assert box_support([-1, -2], [3, 5], [-1, 2]) == pytest.approx(1 + 10)
