"""Linear-objective SDP solver: analytic optima, brute-force grid cross-checks,
status certificates, determinism, and the independent solution checker."""

import numpy as np
import pytest

from nnreach.assembly import DecisionLayout, LinearObjective, LmiProblem
from nnreach.solver import (
    SolverOptions,
    SolveStatus,
    check_solution,
    solve_linear,
)


def make_problem(f0_blocks, fs_blocks, c, g=None, h=None, cones=None):
    """Wrap raw block data as a one-layout problem with free variables."""
    n = len(c)
    layout = DecisionLayout.build([("y", n, cones or "free")])
    g = np.zeros((0, n)) if g is None else np.asarray(g, dtype=float)
    h = np.zeros(0) if h is None else np.asarray(h, dtype=float)
    return LmiProblem(
        f0=[np.asarray(b, dtype=float) for b in f0_blocks],
        fs=[np.asarray(b, dtype=float) for b in fs_blocks],
        g=g,
        h=h,
        objective=LinearObjective(np.asarray(c, dtype=float)),
        layout=layout,
    )


def correlation_problem():
    """min x subject to [[1, x], [x, 1]] being positive semidefinite."""
    f0 = -np.eye(2)
    fx = np.array([[[0.0, -1.0], [-1.0, 0.0]]])
    return make_problem([f0], [fx], [1.0])


class TestAnalytic:
    def test_correlation_bound(self):
        sol = solve_linear(correlation_problem(), SolverOptions())
        assert sol.status == SolveStatus.OPTIMAL
        assert sol.objective == pytest.approx(-1.0, abs=1e-6)

    def test_max_of_interval_points(self):
        # min b subject to x_i <= b for samples x_i: optimum is the max
        xs = [-0.3, 1.7, 0.4, 1.69]
        f0 = [np.array([[x]]) for x in xs]
        fs = [np.array([[[-1.0]]]) for _ in xs]
        sol = solve_linear(make_problem(f0, fs, [1.0]), SolverOptions())
        assert sol.status == SolveStatus.OPTIMAL
        assert sol.objective == pytest.approx(1.7, abs=1e-6)

    def test_two_variable_eigenvalue_bound(self):
        # min y1 + y2 subject to diag(y1, y2) ⪰ [[1, 0.5], [0.5, 1]];
        # optimum has both constraints active with y1 = y2 = 1.5
        f0 = np.array([[1.0, 0.5], [0.5, 1.0]])
        fs = np.array([
            [[-1.0, 0.0], [0.0, 0.0]],
            [[0.0, 0.0], [0.0, -1.0]],
        ])
        sol = solve_linear(make_problem([f0], [fs], [1.0, 1.0]), SolverOptions())
        assert sol.status == SolveStatus.OPTIMAL
        assert sol.objective == pytest.approx(3.0, abs=1e-5)

    def test_sign_rows_respected(self):
        # min y with y >= 0.25 forced by an inequality row, LMI slack elsewhere
        prob = make_problem(
            [-np.eye(1)], [np.array([[[ -1.0 ]]])], [1.0],
            g=[[-1.0]], h=[-0.25],
        )
        sol = solve_linear(prob, SolverOptions())
        assert sol.status == SolveStatus.OPTIMAL
        assert sol.objective == pytest.approx(0.25, abs=1e-6)
        assert sol.y[0] >= 0.25 - 1e-8


class TestGridOracle:
    """Random bounded SDPs cross-checked against dense grid enumeration."""

    def run_case(self, seed):
        rng = np.random.default_rng(seed)
        dim = int(rng.integers(2, 7))
        fs = []
        for _ in range(3):
            m = rng.standard_normal((dim, dim))
            fs.append(0.5 * (m + m.T))
        fs = np.stack(fs)
        f0 = -np.eye(dim) * rng.uniform(1.0, 3.0)  # y = 0 strictly feasible
        c = rng.standard_normal(3)
        g = np.vstack([np.eye(3), -np.eye(3)])  # |y_i| <= 2 keeps it bounded
        h = np.full(6, 2.0)
        prob = make_problem([f0], [fs], c, g=g, h=h)
        sol = solve_linear(prob, SolverOptions())
        assert sol.status == SolveStatus.OPTIMAL, f"seed {seed}: {sol.status}"

        # returned point feasible
        assert np.linalg.eigvalsh(prob.materialize(sol.y))[-1] <= 1e-7
        assert np.max(prob.ineq_residual(sol.y)) <= 1e-7

        # no feasible grid point does better than the reported optimum
        axis = np.linspace(-2.0, 2.0, 21)
        grid = np.stack(np.meshgrid(axis, axis, axis, indexing="ij"), axis=-1).reshape(-1, 3)
        mats = f0 + np.tensordot(grid, fs, axes=1)
        feas = np.linalg.eigvalsh(mats)[:, -1] <= 1e-9
        feas &= np.all(grid @ g.T <= h + 1e-12, axis=1)
        assert feas.any()
        grid_best = np.min(grid[feas] @ c)
        assert sol.objective <= grid_best + 1e-4, f"seed {seed}"
        return prob, sol

    @pytest.mark.parametrize("seed", range(100, 108))
    def test_random_cases(self, seed):
        prob, sol = self.run_case(seed)
        report = check_solution(prob, sol)
        assert report.ok, report.messages


class TestStatuses:
    def test_infeasible_certificate(self):
        # [[1, y], [y, -1]] is indefinite for every y, so ⪯ 0 never holds
        f0 = np.array([[1.0, 0.0], [0.0, -1.0]])
        fy = np.array([[[0.0, 1.0], [1.0, 0.0]]])
        prob = make_problem([f0], [fy], [1.0])
        sol = solve_linear(prob, SolverOptions())
        assert sol.status == SolveStatus.INFEASIBLE

    def test_unused_variable_makes_no_false_claim(self):
        # pathological input: the variable touches no constraint, yet the
        # block alone is infeasible; any non-optimal status is acceptable
        prob = make_problem([np.array([[1.0]])], [np.array([[[0.0]]])], [1.0])
        sol = solve_linear(prob, SolverOptions())
        assert sol.status != SolveStatus.OPTIMAL

    def test_infeasible_two_sided(self):
        # y <= -1 (block) and y >= 1 (sign row) cannot both hold
        prob = make_problem(
            [np.array([[1.0]])], [np.array([[[1.0]]])], [1.0],
            g=[[-1.0]], h=[-1.0],
        )
        sol = solve_linear(prob, SolverOptions())
        assert sol.status == SolveStatus.INFEASIBLE

    def test_unbounded_objective(self):
        # min y with only y <= 5 active in the block: no lower bound
        prob = make_problem([np.array([[-5.0]])], [np.array([[[1.0]]])], [1.0])
        sol = solve_linear(prob, SolverOptions())
        assert sol.status == SolveStatus.UNBOUNDED_OBJECTIVE

    def test_non_optimal_has_no_false_claim(self):
        prob = make_problem([np.array([[1.0]])], [np.array([[[0.0]]])], [1.0])
        sol = solve_linear(prob, SolverOptions())
        report = check_solution(prob, sol)
        assert not report.ok


class TestChecker:
    def test_accepts_fresh_solution(self):
        prob = correlation_problem()
        sol = solve_linear(prob, SolverOptions())
        report = check_solution(prob, sol)
        assert report.ok, report.messages

    def test_flags_perturbed_point(self):
        prob = correlation_problem()
        sol = solve_linear(prob, SolverOptions())
        tampered = type(sol)(
            status=sol.status,
            y=sol.y + np.array([1e-2]),
            objective=sol.objective,
            diagnostics=dict(sol.diagnostics),
            duals=dict(sol.duals),
        )
        report = check_solution(prob, tampered)
        assert not report.ok
        assert report.messages

    def test_flags_objective_mismatch(self):
        prob = correlation_problem()
        sol = solve_linear(prob, SolverOptions())
        tampered = type(sol)(
            status=sol.status,
            y=sol.y,
            objective=sol.objective - 0.5,  # claim better than achievable
            diagnostics=dict(sol.diagnostics),
            duals=dict(sol.duals),
        )
        report = check_solution(prob, tampered)
        assert not report.ok

    def test_flags_infeasible_point(self):
        prob = correlation_problem()
        sol = solve_linear(prob, SolverOptions())
        tampered = type(sol)(
            status=sol.status,
            y=np.array([-1.5]),  # outside the PSD region
            objective=-1.5,
            diagnostics=dict(sol.diagnostics),
            duals=dict(sol.duals),
        )
        report = check_solution(prob, tampered)
        assert not report.ok
        assert report.max_eig is not None and report.max_eig > 1e-6


class TestDeterminism:
    def test_bitwise_repeatability(self):
        rng = np.random.default_rng(200)
        dim = 5
        m = rng.standard_normal((3, dim, dim))
        fs = 0.5 * (m + np.transpose(m, (0, 2, 1)))
        prob = make_problem(
            [-2.0 * np.eye(dim)], [fs], rng.standard_normal(3),
            g=np.vstack([np.eye(3), -np.eye(3)]), h=np.full(6, 2.0),
        )
        a = solve_linear(prob, SolverOptions())
        b = solve_linear(prob, SolverOptions())
        assert a.status == b.status == SolveStatus.OPTIMAL
        assert np.array_equal(a.y, b.y)
        assert a.objective == b.objective
