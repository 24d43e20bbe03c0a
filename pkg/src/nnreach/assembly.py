"""Assembly of the semidefinite feasibility conditions for one reach step.

A step certificate has the shape

    M_input(y) + M_stack(y) + M_template ⪯ 0,

all three forms lifted onto the shared basis. The constraint is affine in the
decision vector y (input multipliers, stack multipliers, template parameters),
so each program is stored as a constant matrix plus a stack of per-variable
coefficient matrices, together with sign information and an objective.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import qc, sets
from .network import FeedforwardNetwork


class AssemblyError(ValueError):
    """Raised for inconsistent assembly inputs."""


@dataclass(frozen=True)
class VariableBlock:
    name: str
    start: int
    size: int
    cone: str  # "free" or "nonneg"


@dataclass(frozen=True)
class DecisionLayout:
    """Named, contiguous blocks of the decision vector with sign cones."""

    blocks: tuple[VariableBlock, ...]

    @classmethod
    def build(cls, spec: list[tuple[str, int, str]]) -> "DecisionLayout":
        blocks = []
        start = 0
        for name, size, cone in spec:
            if cone not in ("free", "nonneg"):
                raise AssemblyError(f"unknown cone '{cone}' for block '{name}'")
            blocks.append(VariableBlock(name, start, size, cone))
            start += size
        return cls(tuple(blocks))

    @property
    def size(self) -> int:
        return sum(b.size for b in self.blocks)

    def block_slice(self, name: str) -> slice:
        for b in self.blocks:
            if b.name == name:
                return slice(b.start, b.start + b.size)
        raise AssemblyError(f"no decision block named '{name}'")

    def has_block(self, name: str) -> bool:
        return any(b.name == name for b in self.blocks)

    def nonneg_indices(self) -> np.ndarray:
        idx = []
        for b in self.blocks:
            if b.cone == "nonneg":
                idx.extend(range(b.start, b.start + b.size))
        return np.asarray(idx, dtype=int)

    def extended(self, extra: list[tuple[str, int, str]]) -> "DecisionLayout":
        spec = [(b.name, b.size, b.cone) for b in self.blocks] + extra
        return DecisionLayout.build(spec)


@dataclass(frozen=True)
class LinearObjective:
    """Minimize c'y."""

    c: np.ndarray


@dataclass(frozen=True)
class MaxdetObjective:
    """Maximize log det of the symmetric matrix assembled from decision
    entries: A = sum over entries of y[var] * U_pq, with U_pq the symmetric
    unit matrix for position (p, q)."""

    dim: int
    entries: tuple[tuple[int, int, int], ...]  # (variable index, p, q)


@dataclass
class LmiProblem:
    """min/max objective subject to F0_k + sum_i y_i F_k[i] ⪯ 0 per block
    and G y <= h elementwise."""

    f0: list[np.ndarray]
    fs: list[np.ndarray]
    g: np.ndarray
    h: np.ndarray
    objective: LinearObjective | MaxdetObjective
    layout: DecisionLayout

    @property
    def n_vars(self) -> int:
        return self.layout.size

    @property
    def n_blocks(self) -> int:
        return len(self.f0)

    def materialize(self, y, block: int = 0) -> np.ndarray:
        """Constraint matrix F0 + sum y_i F_i of one block at a point."""
        y = np.asarray(y, dtype=float)
        if y.shape != (self.n_vars,):
            raise AssemblyError(f"decision vector must have shape ({self.n_vars},)")
        return self.f0[block] + np.tensordot(y, self.fs[block], axes=1)

    def ineq_residual(self, y) -> np.ndarray:
        """G y - h; nonpositive when the sign constraints hold."""
        if self.g.shape[0] == 0:
            return np.zeros(0)
        return self.g @ np.asarray(y, dtype=float) - self.h


def _sign_rows(layout: DecisionLayout) -> tuple[np.ndarray, np.ndarray]:
    idx = layout.nonneg_indices()
    g = np.zeros((idx.size, layout.size))
    for r, i in enumerate(idx):
        g[r, i] = -1.0
    return g, np.zeros(idx.size)


def dump_triplets(problem: LmiProblem, fh) -> None:
    """Write nonzero coefficient entries as 'block var row col value' lines.

    var -1 denotes the constant matrix. Mainly for eyeballing assembled
    programs and for diffing two assembly paths.
    """
    for k, (f0, fs) in enumerate(zip(problem.f0, problem.fs)):
        for i, j in zip(*np.nonzero(f0)):
            fh.write(f"{k} -1 {i} {j} {float(f0[i, j])!r}\n")
        for v in range(fs.shape[0]):
            for i, j in zip(*np.nonzero(fs[v])):
                fh.write(f"{k} {v} {i} {j} {float(fs[v][i, j])!r}\n")


@dataclass(frozen=True)
class StepSkeleton:
    """Shared part of all template programs of one reach step: the lifted
    multiplier coefficient matrices and the basis maps."""

    basis: qc.BasisLayout
    layout: DecisionLayout  # multiplier variables only
    f_mult: np.ndarray  # (q_mult, dim, dim)
    e_in: np.ndarray
    e_mid: np.ndarray
    e_out: np.ndarray
    input_kind: str  # "polytope" or "ellipsoid"
    input_size: int  # facet count or 1
    multiplier_mode: str


def _relu_unit_lifts(Y: np.ndarray, Z: np.ndarray, e_row: np.ndarray, with_pairs: bool):
    """Per-multiplier lifted matrices for the stack constraint, built from the
    row maps of pre-activations (Y), post-activations (Z) and the constant."""
    d = Y.shape[0]
    mats = []
    for i in range(d):
        m = np.outer(Y[i], Z[i])
        mats.append(m + m.T - 2.0 * np.outer(Z[i], Z[i]))
    for i in range(d):
        m = np.outer(Z[i] - Y[i], e_row)
        mats.append(m + m.T)
    for i in range(d):
        m = np.outer(Z[i], e_row)
        mats.append(m + m.T)
    if with_pairs:
        for i, j in qc.pair_list(d):
            u = Y[i] - Y[j]
            w = Z[i] - Z[j]
            m = np.outer(u, w)
            mats.append(m + m.T - 2.0 * np.outer(w, w))
    return mats


def _input_unit_lifts(input_set, e_in: np.ndarray):
    """Lifted coefficient matrices of the input-set constraint and the
    matching (kind, count) descriptor."""
    n_x = e_in.shape[0] - 1
    x_rows = e_in[:n_x]
    e_row = e_in[n_x]
    if isinstance(input_set, sets.Box):
        input_set = sets.box_to_polytope(input_set)
    if isinstance(input_set, sets.Polytope):
        A, b = input_set.A, input_set.b
        m = A.shape[0]
        resid = A @ x_rows - np.outer(b, e_row)
        mats = []
        for p in range(m):
            for q_i in range(p, m):
                m_pq = np.outer(resid[p], resid[q_i])
                if p == q_i:
                    mats.append(m_pq)
                else:
                    mats.append(m_pq + m_pq.T)
        return mats, "polytope", m
    if isinstance(input_set, sets.Ellipsoid):
        rows = input_set.A @ x_rows + np.outer(input_set.b, e_row)
        m_mu = np.outer(e_row, e_row) - rows.T @ rows
        return [m_mu], "ellipsoid", 1
    raise AssemblyError(f"unsupported input set type {type(input_set).__name__}")


def assemble_lmi(
    input_set,
    net: FeedforwardNetwork,
    step,
    multiplier_mode: str = "full",
    projected: bool = True,
) -> StepSkeleton:
    """Build the template-independent part of one reach step's programs.

    ``step`` provides A, B, c and (when ``projected``) the clamp bounds
    u_lower, u_upper. With ``projected`` False the policy output feeds the
    plant unclamped, which drops the two clamp stages from the basis.
    """
    if multiplier_mode not in ("full", "diag"):
        raise AssemblyError(f"unknown multiplier mode '{multiplier_mode}'")
    layout_b = qc.BasisLayout.from_network(net, projected=projected)
    if sets.dim_of(input_set) != layout_b.n_x:
        raise AssemblyError(
            f"input set dimension {sets.dim_of(input_set)} does not match network "
            f"input {layout_b.n_x}"
        )
    if step.A.shape[1] != layout_b.n_x:
        raise AssemblyError(
            f"plant state size {step.A.shape[1]} does not match network input "
            f"{layout_b.n_x}"
        )
    if step.B.shape[1] != layout_b.n_u:
        raise AssemblyError(
            f"plant input size {step.B.shape[1]} does not match network output "
            f"{layout_b.n_u}"
        )
    e_in = qc.input_map(layout_b)
    if projected:
        e_mid = qc.relu_map(layout_b, net, step.u_lower, step.u_upper)
        e_out = qc.output_map(layout_b, step.A, step.B, step.c)
    else:
        e_mid = qc.relu_map(layout_b, net)
        e_out = qc.output_map(layout_b, step.A, step.B, step.c, net=net)

    d = layout_b.relu_count
    e_row = np.zeros(layout_b.dim)
    e_row[layout_b.const_index] = 1.0
    input_mats, input_kind, input_size = _input_unit_lifts(input_set, e_in)
    with_pairs = multiplier_mode == "full"
    relu_mats = _relu_unit_lifts(e_mid[:d], e_mid[d : 2 * d], e_row, with_pairs)

    n_input = len(input_mats)
    spec = [
        ("input", n_input, "nonneg"),
        ("lam", d, "free"),
        ("nu", d, "nonneg"),
        ("eta", d, "nonneg"),
    ]
    if with_pairs:
        spec.append(("pair", d * (d - 1) // 2, "nonneg"))
    layout = DecisionLayout.build(spec)
    f_mult = np.stack(input_mats + relu_mats)
    return StepSkeleton(
        basis=layout_b,
        layout=layout,
        f_mult=f_mult,
        e_in=e_in,
        e_mid=e_mid,
        e_out=e_out,
        input_kind=input_kind,
        input_size=input_size,
        multiplier_mode=multiplier_mode,
    )


def assemble_facet_program(skel: StepSkeleton, normal) -> LmiProblem:
    """Program: minimize the offset of the halfspace normal'x_next <= offset
    subject to the step certificate."""
    a = np.asarray(normal, dtype=float)
    n_x = skel.e_out.shape[0] - 1
    if a.shape != (n_x,):
        raise AssemblyError(f"facet normal must have shape ({n_x},), got {a.shape}")
    if not np.any(a):
        raise AssemblyError("facet normal must be nonzero")
    out_rows = skel.e_out[:n_x]
    e_row = skel.e_out[n_x]
    a_row = a @ out_rows
    f_const = np.outer(a_row, e_row)
    f_const = f_const + f_const.T
    f_offset = -2.0 * np.outer(e_row, e_row)

    layout = skel.layout.extended([("offset", 1, "free")])
    fs = np.concatenate([skel.f_mult, f_offset[None]], axis=0)
    c = np.zeros(layout.size)
    c[layout.block_slice("offset")] = 1.0
    g, h = _sign_rows(layout)
    return LmiProblem([f_const], [fs], g, h, LinearObjective(c), layout)


def assemble_ellipsoid_program(skel: StepSkeleton) -> LmiProblem:
    """Program: maximize log det of the shape matrix of an enclosing
    ellipsoid |A x_next + b| <= 1 subject to the step certificate.

    The template's quadratic dependence on (A, b) is removed with a Schur
    complement: the certificate is equivalent to

        [[D(y), (F E)'], [F E, I]] ⪰ 0,   F = [A b],

    with D(y) = outer(e, e) - M_input(y) - M_stack(y), which is affine in all
    decisions. The stored block is the negation of this bordered matrix.
    """
    n_x = skel.e_out.shape[0] - 1
    dim = skel.basis.dim
    n_big = dim + n_x
    n_shape = n_x * (n_x + 1) // 2

    layout = skel.layout.extended([("shape", n_shape, "free"), ("center", n_x, "free")])
    q_total = layout.size
    fs = np.zeros((q_total, n_big, n_big))
    n_mult = skel.f_mult.shape[0]
    fs[:n_mult, :dim, :dim] = skel.f_mult

    e_basis = np.zeros(dim)
    e_basis[skel.basis.const_index] = 1.0
    f0 = np.zeros((n_big, n_big))
    f0[:dim, :dim] = -np.outer(e_basis, e_basis)
    f0[dim:, dim:] = -np.eye(n_x)

    out_rows = skel.e_out[:n_x]
    e_row = skel.e_out[n_x]
    shape_start = layout.block_slice("shape").start
    entries = []
    v = shape_start
    for p in range(n_x):
        for q_i in range(p, n_x):
            # Row p of F E gains out_rows[q], and row q gains out_rows[p].
            fs[v, :dim, dim + p] -= out_rows[q_i]
            fs[v, dim + p, :dim] -= out_rows[q_i]
            if q_i != p:
                fs[v, :dim, dim + q_i] -= out_rows[p]
                fs[v, dim + q_i, :dim] -= out_rows[p]
            entries.append((v, p, q_i))
            v += 1
    center_start = layout.block_slice("center").start
    for r in range(n_x):
        v = center_start + r
        fs[v, :dim, dim + r] -= e_row
        fs[v, dim + r, :dim] -= e_row

    g, h = _sign_rows(layout)
    objective = MaxdetObjective(dim=n_x, entries=tuple(entries))
    return LmiProblem([f0], [fs], g, h, objective, layout)


def shape_from_solution(layout: DecisionLayout, y, n_x: int) -> tuple[np.ndarray, np.ndarray]:
    """Recover (A, b) of the template ellipsoid from a decision vector."""
    y = np.asarray(y, dtype=float)
    sl = layout.block_slice("shape")
    vals = y[sl]
    A = np.zeros((n_x, n_x))
    k = 0
    for p in range(n_x):
        for q_i in range(p, n_x):
            A[p, q_i] = vals[k]
            A[q_i, p] = vals[k]
            k += 1
    b = y[layout.block_slice("center")].copy()
    return A, b


def multipliers_from_solution(skel: StepSkeleton, y) -> qc.ReluMultipliers:
    """View of the stack multipliers inside a decision vector."""
    y = np.asarray(y, dtype=float)
    lam = y[skel.layout.block_slice("lam")]
    nu = y[skel.layout.block_slice("nu")]
    eta = y[skel.layout.block_slice("eta")]
    pair = None
    if skel.layout.has_block("pair"):
        pair = np.maximum(y[skel.layout.block_slice("pair")], 0.0)
    return qc.ReluMultipliers(lam, np.maximum(nu, 0.0), np.maximum(eta, 0.0), pair)
