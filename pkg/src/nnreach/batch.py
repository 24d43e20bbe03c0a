"""Multi-step reachability in one program over a stacked basis.

Instead of chaining one-step programs through intermediate template sets,
build a single certificate over the basis

    v = [x0; z_0; z_1; ...; z_{N-1}; 1]

where z_t stacks every hidden activation of the policy network at step t.
Each state x_t is an affine function of v (ordered products of the step
matrices arise by composing row maps step by step), so one ReLU stack
constraint per step, one input-set constraint on x0, and one template on
x_N give an outer approximation of the N-step image directly.

The policy output must feed the plant unclamped here: clamp stages would
need their own basis blocks per step, which this formulation does not carry.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import sets
from .assembly import (
    AssemblyError,
    DecisionLayout,
    StepSkeleton,
    _input_unit_lifts,
    _relu_unit_lifts,
)
from .dynamics import LtvSystem
from .network import FeedforwardNetwork


@dataclass(frozen=True)
class BatchBasis:
    """Index bookkeeping for the stacked multi-step basis vector."""

    n_x: int
    hidden: tuple[int, ...]
    n_steps: int

    def __post_init__(self):
        if self.n_steps < 1:
            raise AssemblyError(f"batch needs n_steps >= 1, got {self.n_steps}")
        object.__setattr__(self, "hidden", tuple(int(h) for h in self.hidden))

    @property
    def stage_size(self) -> int:
        return sum(self.hidden)

    @property
    def dim(self) -> int:
        return self.n_x + self.n_steps * self.stage_size + 1

    @property
    def const_index(self) -> int:
        return self.dim - 1

    def x0_slice(self) -> slice:
        return slice(0, self.n_x)

    def layer_slice(self, t: int, k: int) -> slice:
        """Activation block of hidden layer k at step t."""
        if not 0 <= t < self.n_steps:
            raise AssemblyError(f"step index {t} out of range")
        if not 0 <= k < len(self.hidden):
            raise AssemblyError(f"layer index {k} out of range")
        start = self.n_x + t * self.stage_size + sum(self.hidden[:k])
        return slice(start, start + self.hidden[k])


def batch_basis_vector(basis: BatchBasis, net: FeedforwardNetwork, system: LtvSystem, x0):
    """Concrete basis vector for one initial state (activations then 1)."""
    from .network import forward_pass

    x = np.asarray(x0, dtype=float)
    parts = [x]
    for t in range(basis.n_steps):
        u, states = forward_pass(net, x)
        parts.extend(states[:-1])
        s = system.step_at(t)
        x = s.A @ x + s.B @ u + s.c
    parts.append(np.ones(1))
    return np.concatenate(parts)


def assemble_batch(
    input_set,
    net: FeedforwardNetwork,
    system: LtvSystem,
    n_steps: int,
    multiplier_mode: str = "full",
) -> StepSkeleton:
    """Build the programs' shared part for the N-step one-shot certificate.

    Requires every step's policy bounds to be infinite (the clamp stages are
    not representable on this basis); raises otherwise.
    """
    if multiplier_mode not in ("full", "diag"):
        raise AssemblyError(f"unknown multiplier mode '{multiplier_mode}'")
    if n_steps < 1:
        raise AssemblyError(f"batch needs n_steps >= 1, got {n_steps}")
    limit = system.horizon_limit()
    if limit is not None and n_steps > limit:
        raise AssemblyError(f"horizon {n_steps} exceeds the {limit} stored steps")
    for t in range(n_steps):
        s = system.step_at(t)
        if np.isfinite(s.u_lower).any() or np.isfinite(s.u_upper).any():
            raise AssemblyError("batch mode requires unbounded inputs")
    if net.input_dim != system.n_x or net.output_dim != system.n_u:
        raise AssemblyError(
            f"network dims ({net.input_dim}, {net.output_dim}) do not match "
            f"plant dims ({system.n_x}, {system.n_u})"
        )

    basis = BatchBasis(system.n_x, net.hidden_widths, n_steps)
    dim = basis.dim
    e_row = np.zeros(dim)
    e_row[basis.const_index] = 1.0

    def selector(sl: slice) -> np.ndarray:
        rows = np.zeros((sl.stop - sl.start, dim))
        rows[:, sl] = np.eye(sl.stop - sl.start)
        return rows

    x_rows = selector(basis.x0_slice())
    e_in = np.vstack([x_rows, e_row])

    input_mats, input_kind, input_size = _input_unit_lifts(input_set, e_in)
    with_pairs = multiplier_mode == "full"

    spec = [("input", len(input_mats), "nonneg")]
    mats = list(input_mats)
    d = sum(net.hidden_widths)
    n_pair = d * (d - 1) // 2
    for t in range(n_steps):
        y_rows, z_rows = [], []
        prev = x_rows
        for k in range(len(net.hidden_widths)):
            w, b = net.weights[k], net.biases[k]
            pre = w @ prev
            pre[:, basis.const_index] += b
            y_rows.append(pre)
            prev = selector(basis.layer_slice(t, k))
            z_rows.append(prev)
        u_rows = net.weights[-1] @ prev
        u_rows[:, basis.const_index] += net.biases[-1]
        s = system.step_at(t)
        x_rows = s.A @ x_rows + s.B @ u_rows
        x_rows[:, basis.const_index] += s.c

        mats.extend(
            _relu_unit_lifts(np.vstack(y_rows), np.vstack(z_rows), e_row, with_pairs)
        )
        spec.append((f"lam{t}", d, "free"))
        spec.append((f"nu{t}", d, "nonneg"))
        spec.append((f"eta{t}", d, "nonneg"))
        if with_pairs:
            spec.append((f"pair{t}", n_pair, "nonneg"))

    e_out = np.vstack([x_rows, e_row])
    return StepSkeleton(
        basis=basis,
        layout=DecisionLayout.build(spec),
        f_mult=np.stack(mats),
        e_in=e_in,
        e_mid=None,
        e_out=e_out,
        input_kind=input_kind,
        input_size=input_size,
        multiplier_mode=multiplier_mode,
    )
