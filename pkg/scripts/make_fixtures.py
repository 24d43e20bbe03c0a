#!/usr/bin/env python3
"""Regenerate the committed fixture networks and scenario files.

Everything here is deterministic (fixed seeds, closed-form constants), so
rerunning the script reproduces the checked-in files byte for byte.
"""

import json
from pathlib import Path

import numpy as np

from nnreach.network import FeedforwardNetwork, random_network, save_network

ROOT = Path(__file__).resolve().parent.parent
SCENARIOS = ROOT / "scenarios"
NETWORKS = SCENARIOS / "networks"

# Double-integrator plant (1 s sampling).
DI_A = [[1.0, 1.0], [0.0, 1.0]]
DI_B = [[0.5], [1.0]]


def lqr_gain(a, b, q, r, iters: int = 10000, tol: float = 1e-14) -> np.ndarray:
    """Discrete-time LQR gain K (u = -K x) by Riccati fixed-point iteration."""
    p = q.copy()
    for _ in range(iters):
        btpb = r + b.T @ p @ b
        k = np.linalg.solve(btpb, b.T @ p @ a)
        p_next = q + a.T @ p @ a - a.T @ p @ b @ k
        if np.abs(p_next - p).max() < tol:
            p = p_next
            break
        p = p_next
    return np.linalg.solve(r + b.T @ p @ b, b.T @ p @ a)


def linear_as_relu_pair(k: np.ndarray) -> FeedforwardNetwork:
    """Encode u = -K x exactly as a one-hidden-layer ReLU network.

    -Kx = relu(-Kx) - relu(Kx) for every x, so the pair construction is exact
    everywhere, not just on a bounded region.
    """
    w0 = np.vstack([-k, k])
    m = k.shape[0]
    w1 = np.hstack([np.eye(m), -np.eye(m)])
    return FeedforwardNetwork(
        weights=(w0, w1), biases=(np.zeros(2 * m), np.zeros(m))
    )


def write_json(path: Path, doc: dict) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh, indent=1)
        fh.write("\n")
    print(f"wrote {path.relative_to(ROOT)}")


def main() -> None:
    NETWORKS.mkdir(parents=True, exist_ok=True)

    # --- controller networks ------------------------------------------------
    # Seed chosen so the sampled closed loop respects the scenario's state box
    # (the controller actively damps the velocity), giving the bundled
    # scenario a meaningful Verified/Unknown outcome instead of a guaranteed
    # sampled violation.
    di_net = random_network((2, 10, 5, 1), seed=284)
    save_network(di_net, NETWORKS / "di_mlp_10_5.json")
    print("wrote scenarios/networks/di_mlp_10_5.json")

    a = np.array(DI_A)
    b = np.array(DI_B)
    k = lqr_gain(a, b, np.eye(2), np.eye(1))
    eigs = np.linalg.eigvals(a - b @ k)
    print(f"LQR gain K = {k.ravel()}, closed-loop |eigs| = {np.abs(eigs)}")
    save_network(linear_as_relu_pair(k), NETWORKS / "di_linear.json")
    print("wrote scenarios/networks/di_linear.json")

    quad_net = random_network((6, 32, 32, 3), seed=11, weight_scale=0.1)
    save_network(quad_net, NETWORKS / "quad_mlp_32_32.json")
    print("wrote scenarios/networks/quad_mlp_32_32.json")

    # --- double-integrator scenario (bounded inputs, safety box) ------------
    write_json(SCENARIOS / "double_integrator.json", {
        "name": "double-integrator",
        "system": {
            "A": DI_A, "B": DI_B, "c": [0.0, 0.0],
            "u_lower": [-1.0], "u_upper": [1.0],
        },
        "network_path": "networks/di_mlp_10_5.json",
        "x0": {"type": "box", "lower": [2.5, -0.25], "upper": [3.0, 0.25]},
        "horizon": 6,
        "template": "default",
        "avoid": [{
            "region": {"type": "box", "lower": [-5.0, -1.0], "upper": [5.0, 1.0]},
            "complement": True,
            "label": "state-constraints",
        }],
        "multiplier_mode": "full",
        "falsification": {"samples": 10000, "seed": 0},
        "projections": [[0, 1]],
    })

    # --- linear-controller variant (unbounded inputs, goal region) ----------
    write_json(SCENARIOS / "double_integrator_linear.json", {
        "name": "double-integrator-linear",
        "system": {
            "A": DI_A, "B": DI_B, "c": [0.0, 0.0],
            "u_lower": [None], "u_upper": [None],
        },
        "network_path": "networks/di_linear.json",
        "x0": {"type": "box", "lower": [2.5, -0.25], "upper": [3.0, 0.25]},
        "horizon": 6,
        "template": "default",
        "goal": {"type": "box", "lower": [-0.25, -0.25], "upper": [0.25, 0.25]},
        "multiplier_mode": "full",
        "falsification": {"samples": 10000, "seed": 0},
        "projections": [[0, 1]],
    })

    # --- quadrotor scenario (6 states, ellipsoid template) ------------------
    g = 9.81
    a_c = np.zeros((6, 6))
    a_c[:3, 3:] = np.eye(3)
    b_c = np.zeros((6, 3))
    b_c[3, 0] = g
    b_c[4, 1] = -g
    b_c[5, 2] = 1.0
    c_c = [0.0, 0.0, 0.0, 0.0, 0.0, -g]
    tan20 = float(np.tan(np.pi / 9))
    q0 = np.array([4.7, 4.7, 3.0, 0.95, 0.0, 0.0])
    shape = np.diag([20.0, 20.0, 20.0, 100.0, 100.0, 100.0])  # radii 0.05 / 0.01
    goal_rows = []
    goal_offsets = []
    for axis, (lo, hi) in enumerate([(3.7, 4.1), (2.5, 3.5), (1.2, 2.6)]):
        row = [0.0] * 6
        row[axis] = 1.0
        goal_rows.append(row)
        goal_offsets.append(hi)
        row = [0.0] * 6
        row[axis] = -1.0
        goal_rows.append(row)
        goal_offsets.append(-lo)
    write_json(SCENARIOS / "quadrotor.json", {
        "name": "quadrotor",
        "system": {
            "continuous": {"A": a_c.tolist(), "B": b_c.tolist(), "c": c_c},
            "t_s": 0.1,
            "u_lower": [-tan20, -tan20, 0.0],
            "u_upper": [tan20, tan20, 2 * g],
        },
        "network_path": "networks/quad_mlp_32_32.json",
        "x0": {
            "type": "ellipsoid",
            "A": shape.tolist(),
            "b": (-shape @ q0).tolist(),
        },
        "horizon": 10,
        "template": {"kind": "ellipsoid"},
        "solver_opts": {"tol_gap": 1e-6, "max_iter": 600},
        "goal": {"type": "polytope", "A": goal_rows, "b": goal_offsets},
        "avoid": [{
            "region": {
                "type": "box",
                "lower": [-5.0, -5.0, -5.0, -1.0, -1.0, -1.0],
                "upper": [5.0, 5.0, 5.0, 1.0, 1.0, 1.0],
            },
            "complement": True,
            "label": "state-constraints",
        }],
        "multiplier_mode": "diag",
        "falsification": {"samples": 10000, "seed": 0},
        "projections": [[0, 1], [0, 2]],
    })


if __name__ == "__main__":
    main()
