"""Shared fixtures: the bundled scenario corpus and small analytic systems."""

from pathlib import Path

import numpy as np
import pytest

from nnreach.dynamics import LtvStep, LtvSystem, ClosedLoop
from nnreach.network import FeedforwardNetwork, load_network

REPO = Path(__file__).resolve().parents[1]
SCENARIOS = REPO / "scenarios"


@pytest.fixture(scope="session")
def scenario_dir() -> Path:
    return SCENARIOS


def make_di_system(u_lower=(-1.0,), u_upper=(1.0,)) -> LtvSystem:
    """Double-integrator plant: x' = [[1,1],[0,1]]x + [0.5;1]u."""
    step = LtvStep(
        A=np.array([[1.0, 1.0], [0.0, 1.0]]),
        B=np.array([[0.5], [1.0]]),
        c=np.zeros(2),
        u_lower=np.asarray(u_lower, dtype=float),
        u_upper=np.asarray(u_upper, dtype=float),
    )
    return LtvSystem(steps=(step,), repeat=True)


def lqr_gain() -> np.ndarray:
    """Fixed point of the discrete Riccati recursion for the plant above
    with unit state and input weights; computed independently here so tests
    do not trust the fixture generator."""
    a = np.array([[1.0, 1.0], [0.0, 1.0]])
    b = np.array([[0.5], [1.0]])
    q = np.eye(2)
    r = np.eye(1)
    p = np.eye(2)
    for _ in range(500):
        btp = b.T @ p
        k = np.linalg.solve(r + btp @ b, btp @ a)
        p_next = q + a.T @ p @ (a - b @ k)
        if np.max(np.abs(p_next - p)) < 1e-14:
            p = p_next
            break
        p = p_next
    btp = b.T @ p
    return np.linalg.solve(r + btp @ b, btp @ a)


def linear_net(k: np.ndarray) -> FeedforwardNetwork:
    """Encode u = -k x exactly as one ReLU hidden layer: relu(-kx) - relu(kx)."""
    k = np.atleast_2d(np.asarray(k, dtype=float))
    m = k.shape[0]
    w0 = np.vstack([-k, k])
    w1 = np.hstack([np.eye(m), -np.eye(m)])
    return FeedforwardNetwork(
        weights=(w0, w1), biases=(np.zeros(2 * m), np.zeros(m))
    )


@pytest.fixture(scope="session")
def di_system() -> LtvSystem:
    return make_di_system()


@pytest.fixture(scope="session")
def di_net() -> FeedforwardNetwork:
    return load_network(SCENARIOS / "networks" / "di_mlp_10_5.json")


@pytest.fixture(scope="session")
def quad_net() -> FeedforwardNetwork:
    return load_network(SCENARIOS / "networks" / "quad_mlp_32_32.json")


@pytest.fixture(scope="session")
def lqr_loop() -> ClosedLoop:
    inf = np.array([np.inf])
    system = make_di_system(u_lower=-inf, u_upper=inf)
    return ClosedLoop(system=system, network=linear_net(lqr_gain()))


def box_support(lower, upper, d) -> float:
    """Closed-form support value of a box, written independently of sets.py."""
    lower = np.asarray(lower, dtype=float)
    upper = np.asarray(upper, dtype=float)
    d = np.asarray(d, dtype=float)
    return float(np.sum(np.where(d >= 0, d * upper, d * lower)))
