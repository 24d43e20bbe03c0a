"""Quadratic-constraint abstraction of ReLU stacks, input sets and templates.

Everything is expressed over one shared basis vector

    v = [x0; x1; ...; xL; (s_lo; s_hi;) 1]

holding the network input x0, the hidden activations, optionally the two
clamp stages s_lo = max(out, lower) and s_hi = min(s_lo, upper), and a
trailing constant 1. Quadratic forms on native coordinates (input, ReLU
stack, next state) are pulled onto this basis by congruence with selector
matrices built here.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .network import FeedforwardNetwork, ProjectedNetwork, forward_pass, projected_forward


class QcError(ValueError):
    """Raised for malformed multipliers, dimensions or basis mismatches."""


@dataclass(frozen=True)
class QcMatrix:
    """Symmetric matrix of a quadratic form, tagged with its coordinate basis."""

    M: np.ndarray
    basis: str

    def __post_init__(self):
        M = np.asarray(self.M, dtype=float)
        if M.ndim != 2 or M.shape[0] != M.shape[1]:
            raise QcError(f"quadratic form must be square, got shape {M.shape}")
        object.__setattr__(self, "M", 0.5 * (M + M.T))

    @property
    def dim(self) -> int:
        return self.M.shape[0]


@dataclass(frozen=True)
class BasisLayout:
    """Index bookkeeping for the shared basis vector."""

    n_x: int
    hidden: tuple[int, ...]
    n_u: int
    projected: bool

    def __post_init__(self):
        if self.n_x <= 0 or self.n_u <= 0 or not self.hidden:
            raise QcError("layout needs positive input size, output size and hidden widths")
        object.__setattr__(self, "hidden", tuple(int(h) for h in self.hidden))

    @classmethod
    def from_network(cls, net: FeedforwardNetwork, projected: bool = True) -> "BasisLayout":
        return cls(net.input_dim, net.hidden_widths, net.output_dim, projected)

    @property
    def relu_count(self) -> int:
        """Number of scalar ReLU units covered by the stack constraint."""
        extra = 2 * self.n_u if self.projected else 0
        return sum(self.hidden) + extra

    @property
    def block_sizes(self) -> tuple[int, ...]:
        extra = (self.n_u, self.n_u) if self.projected else ()
        return (self.n_x,) + self.hidden + extra + (1,)

    @property
    def dim(self) -> int:
        return sum(self.block_sizes)

    def block_slice(self, k: int) -> slice:
        """Slice of basis block k: 0 is x0, 1..L the hidden layers, then the
        two clamp stages when projected, and the constant last."""
        sizes = self.block_sizes
        if not -len(sizes) <= k < len(sizes):
            raise QcError(f"block index {k} out of range")
        k = k % len(sizes)
        start = sum(sizes[:k])
        return slice(start, start + sizes[k])

    @property
    def const_index(self) -> int:
        return self.dim - 1


def basis_vector(layout: BasisLayout, net: FeedforwardNetwork, x, lower=None, upper=None):
    """Assemble the basis vector for a concrete input (single point)."""
    x = np.asarray(x, dtype=float)
    if layout.projected:
        if lower is None or upper is None:
            raise QcError("projected layout needs clamp bounds")
        _, states = projected_forward(ProjectedNetwork(net, lower, upper), x)
    else:
        _, states = forward_pass(net, x)
    return np.concatenate([x] + [np.atleast_1d(s) for s in states] + [[1.0]])


def sector_qc(alpha: float, beta: float) -> QcMatrix:
    """Quadratic form certifying z in the sector [alpha, beta] around y.

    Nonnegative on pairs (y, z) with z = phi(y) for any phi whose chords stay
    in the sector; for ReLU use (0, 1).
    """
    if alpha > beta:
        raise QcError(f"sector requires alpha <= beta, got ({alpha}, {beta})")
    return QcMatrix(
        np.array([[-2.0 * alpha * beta, alpha + beta], [alpha + beta, -2.0]]), "scalar_pair"
    )


def slope_qc(alpha: float, beta: float) -> QcMatrix:
    """Same matrix as sector_qc, applied to coordinate differences
    (y_i - y_j, z_i - z_j) to certify slope restriction."""
    return QcMatrix(sector_qc(alpha, beta).M, "scalar_pair_diff")


def pair_list(d: int) -> list[tuple[int, int]]:
    """Index pairs (i, j), i < j, in row-major order; the layout of the
    pairwise slope multipliers."""
    return [(i, j) for i in range(d) for j in range(i + 1, d)]


@dataclass(frozen=True)
class ReluMultipliers:
    """Multipliers of the stack constraint for d ReLU units.

    lam (free sign) weights the per-unit complementarity terms, nu and eta
    (nonnegative) the z >= y and z >= 0 halves, pair (nonnegative, optional)
    the pairwise slope terms ordered as in pair_list.
    """

    lam: np.ndarray
    nu: np.ndarray
    eta: np.ndarray
    pair: np.ndarray | None = None

    def __post_init__(self):
        lam = np.asarray(self.lam, dtype=float)
        nu = np.asarray(self.nu, dtype=float)
        eta = np.asarray(self.eta, dtype=float)
        d = lam.shape[0] if lam.ndim == 1 else 0
        if d == 0 or nu.shape != (d,) or eta.shape != (d,):
            raise QcError("lam, nu, eta must be 1-D vectors of one common length")
        if np.any(nu < 0):
            raise QcError("nu must be nonnegative")
        if np.any(eta < 0):
            raise QcError("eta must be nonnegative")
        pair = self.pair
        if pair is not None:
            pair = np.asarray(pair, dtype=float)
            if pair.shape != (d * (d - 1) // 2,):
                raise QcError(
                    f"pair must have length {d * (d - 1) // 2} for {d} units, got {pair.shape}"
                )
            if np.any(pair < 0):
                raise QcError("pair must be nonnegative")
        object.__setattr__(self, "lam", lam)
        object.__setattr__(self, "nu", nu)
        object.__setattr__(self, "eta", eta)
        object.__setattr__(self, "pair", pair)

    @property
    def count(self) -> int:
        return self.lam.shape[0]

    @classmethod
    def zeros(cls, d: int, with_pairs: bool = False) -> "ReluMultipliers":
        pair = np.zeros(d * (d - 1) // 2) if with_pairs else None
        return cls(np.zeros(d), np.zeros(d), np.zeros(d), pair)


def _coupling_matrix(mult: ReluMultipliers) -> np.ndarray:
    d = mult.count
    T = np.diag(mult.lam.copy())
    if mult.pair is not None and mult.pair.size:
        pairs = np.asarray(pair_list(d))
        i, j = pairs[:, 0], pairs[:, 1]
        np.add.at(T, (i, i), mult.pair)
        np.add.at(T, (j, j), mult.pair)
        np.add.at(T, (i, j), -mult.pair)
        np.add.at(T, (j, i), -mult.pair)
    return T


def relu_qc(mult: ReluMultipliers) -> QcMatrix:
    """Stack constraint on [y; z; 1] for z = max(y, 0) applied coordinatewise.

    The form is nonnegative on every such pair: the lam terms vanish by
    complementarity, the pair terms use the unit slope bound, and nu, eta
    weight z >= y and z >= 0.
    """
    d = mult.count
    T = _coupling_matrix(mult)
    Q = np.zeros((2 * d + 1, 2 * d + 1))
    Q[:d, d : 2 * d] = T
    Q[d : 2 * d, :d] = T
    Q[d : 2 * d, d : 2 * d] = -2.0 * T
    Q[:d, -1] = -mult.nu
    Q[-1, :d] = -mult.nu
    Q[d : 2 * d, -1] = mult.nu + mult.eta
    Q[-1, d : 2 * d] = mult.nu + mult.eta
    return QcMatrix(Q, "relu_stack")


def polytope_qc(A, b, gamma) -> QcMatrix:
    """Form on [x; 1] that is nonnegative whenever A x <= b.

    gamma must be symmetric with nonnegative entries; the form is the
    gamma-weighted sum of products of facet residuals.
    """
    A = np.asarray(A, dtype=float)
    b = np.asarray(b, dtype=float)
    gamma = np.asarray(gamma, dtype=float)
    m = A.shape[0]
    if b.shape != (m,):
        raise QcError(f"offsets must have shape ({m},), got {b.shape}")
    if gamma.shape != (m, m):
        raise QcError(f"gamma must have shape ({m}, {m}), got {gamma.shape}")
    if np.abs(gamma - gamma.T).max() > 1e-12 * max(1.0, np.abs(gamma).max()):
        raise QcError("gamma must be symmetric")
    if np.any(gamma < 0):
        raise QcError("gamma entries must be nonnegative")
    n = A.shape[1]
    P = np.zeros((n + 1, n + 1))
    P[:n, :n] = A.T @ gamma @ A
    P[:n, -1] = -A.T @ gamma @ b
    P[-1, :n] = P[:n, -1]
    P[-1, -1] = b @ gamma @ b
    return QcMatrix(P, "native")


def ellipsoid_qc(A, b, mu: float) -> QcMatrix:
    """Form on [x; 1] that is nonnegative whenever |A x + b| <= 1."""
    if mu < 0:
        raise QcError(f"mu must be nonnegative, got {mu}")
    A = np.asarray(A, dtype=float)
    b = np.asarray(b, dtype=float)
    n = A.shape[1]
    if b.shape != (A.shape[0],):
        raise QcError(f"offset must have shape ({A.shape[0]},), got {b.shape}")
    P = np.zeros((n + 1, n + 1))
    P[:n, :n] = -A.T @ A
    P[:n, -1] = -A.T @ b
    P[-1, :n] = P[:n, -1]
    P[-1, -1] = 1.0 - b @ b
    return QcMatrix(mu * P, "native")


def facet_template(normal, offset: float) -> QcMatrix:
    """Form on [y; 1] nonpositive exactly on the halfspace normal'y <= offset."""
    a = np.asarray(normal, dtype=float)
    n = a.shape[0]
    S = np.zeros((n + 1, n + 1))
    S[:n, -1] = a
    S[-1, :n] = a
    S[-1, -1] = -2.0 * float(offset)
    return QcMatrix(S, "template")


def ellipsoid_template(A, b) -> QcMatrix:
    """Form on [y; 1] nonpositive exactly on the ellipsoid |A y + b| <= 1."""
    A = np.asarray(A, dtype=float)
    b = np.asarray(b, dtype=float)
    n = A.shape[1]
    if b.shape != (A.shape[0],):
        raise QcError(f"offset must have shape ({A.shape[0]},), got {b.shape}")
    S = np.zeros((n + 1, n + 1))
    S[:n, :n] = A.T @ A
    S[:n, -1] = A.T @ b
    S[-1, :n] = S[:n, -1]
    S[-1, -1] = b @ b - 1.0
    return QcMatrix(S, "template")


def input_map(layout: BasisLayout) -> np.ndarray:
    """Selector E with E v = [x0; 1]."""
    E = np.zeros((layout.n_x + 1, layout.dim))
    E[: layout.n_x, layout.block_slice(0)] = np.eye(layout.n_x)
    E[-1, layout.const_index] = 1.0
    return E


def relu_map(
    layout: BasisLayout, net: FeedforwardNetwork, lower=None, upper=None
) -> np.ndarray:
    """Map E with E v = [y; z; 1] for the full ReLU stack.

    y collects every pre-activation (including the two clamp stages when the
    layout is projected) and z the matching post-activations, so that
    z = max(y, 0) holds along any true forward pass.
    """
    _check_net(layout, net)
    d = layout.relu_count
    dim = layout.dim
    L = len(layout.hidden)
    E = np.zeros((2 * d + 1, dim))
    E[-1, layout.const_index] = 1.0
    row = 0
    for k in range(L):
        w, b = net.weights[k], net.biases[k]
        size = layout.hidden[k]
        E[row : row + size, layout.block_slice(k)] = w
        E[row : row + size, layout.const_index] = b
        E[d + row : d + row + size, layout.block_slice(k + 1)] = np.eye(size)
        row += size
    if layout.projected:
        lo, hi = _check_bounds(layout, lower, upper)
        n_u = layout.n_u
        w_out, b_out = net.weights[-1], net.biases[-1]
        lo_slice = layout.block_slice(L + 1)
        hi_slice = layout.block_slice(L + 2)
        # Stage 1: s_lo - lower = max(w_out xL + b_out - lower, 0).
        E[row : row + n_u, layout.block_slice(L)] = w_out
        E[row : row + n_u, layout.const_index] = b_out - lo
        E[d + row : d + row + n_u, lo_slice] = np.eye(n_u)
        E[d + row : d + row + n_u, layout.const_index] = -lo
        row += n_u
        # Stage 2: upper - s_hi = max(upper - s_lo, 0).
        E[row : row + n_u, lo_slice] = -np.eye(n_u)
        E[row : row + n_u, layout.const_index] = hi
        E[d + row : d + row + n_u, hi_slice] = -np.eye(n_u)
        E[d + row : d + row + n_u, layout.const_index] = hi
    return E


def output_map(
    layout: BasisLayout, A, B, c, net: FeedforwardNetwork | None = None
) -> np.ndarray:
    """Map E with E v = [x_next; 1] for x_next = A x0 + B u + c.

    With a projected layout u is the second clamp stage; otherwise u is the
    network's affine output layer applied to the last hidden block, which
    requires passing the network.
    """
    A = np.asarray(A, dtype=float)
    B = np.asarray(B, dtype=float)
    c = np.asarray(c, dtype=float)
    n_x = A.shape[0]
    if A.shape != (n_x, layout.n_x):
        raise QcError(f"plant A has shape {A.shape}, layout expects (*, {layout.n_x})")
    if B.shape != (n_x, layout.n_u):
        raise QcError(f"plant B has shape {B.shape}, layout expects ({n_x}, {layout.n_u})")
    if c.shape != (n_x,):
        raise QcError(f"plant c has shape {c.shape}, expected ({n_x},)")
    E = np.zeros((n_x + 1, layout.dim))
    E[:n_x, layout.block_slice(0)] = A
    E[-1, layout.const_index] = 1.0
    L = len(layout.hidden)
    if layout.projected:
        E[:n_x, layout.block_slice(L + 2)] = B
        E[:n_x, layout.const_index] += c
    else:
        if net is None:
            raise QcError("unprojected output map needs the network's output layer")
        _check_net(layout, net)
        E[:n_x, layout.block_slice(L)] = B @ net.weights[-1]
        E[:n_x, layout.const_index] += B @ net.biases[-1] + c
    return E


def lift(qc: QcMatrix, E: np.ndarray) -> QcMatrix:
    """Pull a quadratic form onto the shared basis: E' Q E, symmetrized."""
    E = np.asarray(E, dtype=float)
    if E.ndim != 2 or E.shape[0] != qc.dim:
        raise QcError(
            f"basis map has shape {E.shape}, form needs {qc.dim} rows to compose"
        )
    return QcMatrix(E.T @ qc.M @ E, "unified")


def _check_net(layout: BasisLayout, net: FeedforwardNetwork) -> None:
    if (
        net.input_dim != layout.n_x
        or net.hidden_widths != layout.hidden
        or net.output_dim != layout.n_u
    ):
        raise QcError(
            f"network dims {net.dims} do not match layout "
            f"({layout.n_x}, {layout.hidden}, {layout.n_u})"
        )


def _check_bounds(layout: BasisLayout, lower, upper) -> tuple[np.ndarray, np.ndarray]:
    if lower is None or upper is None:
        raise QcError("projected layout needs finite clamp bounds")
    lo = np.asarray(lower, dtype=float)
    hi = np.asarray(upper, dtype=float)
    if lo.shape != (layout.n_u,) or hi.shape != (layout.n_u,):
        raise QcError(f"clamp bounds must have shape ({layout.n_u},)")
    if not (np.all(np.isfinite(lo)) and np.all(np.isfinite(hi))):
        raise QcError("clamp bounds must be finite; drop the projection stages otherwise")
    if np.any(lo > hi):
        raise QcError("clamp bounds must satisfy lower <= upper")
    return lo, hi
