"""Convex set types (box, polytope, ellipsoid) and the operations on them
needed for reachability: support values, inclusion, intersection tests,
membership, uniform sampling and 2-D geometry for plotting.

Conventions: a polytope is {x : A x <= b}; an ellipsoid is {x : |A x + b| <= 1}
with A symmetric and nonsingular. Inclusion and membership tests apply a small
slack so that boundary cases do not flip on rounding noise.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass

import numpy as np

from ._lp import lp_feasible, solve_lp_max

DEFAULT_TOL = 1e-9


class SetError(ValueError):
    """Raised for malformed sets or unsupported set operations."""


@dataclass(frozen=True)
class Box:
    """Axis-aligned box [lower, upper]; entries may be infinite."""

    lower: np.ndarray
    upper: np.ndarray

    def __post_init__(self):
        lo = np.asarray(self.lower, dtype=float)
        hi = np.asarray(self.upper, dtype=float)
        if lo.ndim != 1 or lo.shape != hi.shape or lo.size == 0:
            raise SetError(f"box bounds must be matching 1-D vectors, got {lo.shape}/{hi.shape}")
        if np.any(np.isnan(lo)) or np.any(np.isnan(hi)):
            raise SetError("box bounds must not be NaN")
        if np.any(lo > hi):
            raise SetError("box bounds must satisfy lower <= upper")
        object.__setattr__(self, "lower", lo)
        object.__setattr__(self, "upper", hi)

    @property
    def dim(self) -> int:
        return self.lower.shape[0]

    @property
    def is_bounded(self) -> bool:
        return bool(np.all(np.isfinite(self.lower)) and np.all(np.isfinite(self.upper)))


@dataclass(frozen=True)
class Polytope:
    """Halfspace intersection {x : A x <= b}."""

    A: np.ndarray
    b: np.ndarray

    def __post_init__(self):
        A = np.asarray(self.A, dtype=float)
        b = np.asarray(self.b, dtype=float)
        if A.ndim != 2 or A.shape[0] == 0:
            raise SetError(f"facet matrix must be 2-D with rows, got shape {A.shape}")
        if b.shape != (A.shape[0],):
            raise SetError(f"offsets must have shape ({A.shape[0]},), got {b.shape}")
        if not (np.all(np.isfinite(A)) and np.all(np.isfinite(b))):
            raise SetError("facet data must be finite")
        norms = np.linalg.norm(A, axis=1)
        if np.any(norms == 0.0):
            raise SetError(f"facet {int(np.argmin(norms))} has a zero normal")
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "b", b)

    @property
    def dim(self) -> int:
        return self.A.shape[1]


@dataclass(frozen=True)
class Ellipsoid:
    """Ellipsoid {x : |A x + b|_2 <= 1} with A symmetric nonsingular."""

    A: np.ndarray
    b: np.ndarray

    def __post_init__(self):
        A = np.asarray(self.A, dtype=float)
        b = np.asarray(self.b, dtype=float)
        if A.ndim != 2 or A.shape[0] != A.shape[1] or A.shape[0] == 0:
            raise SetError(f"shape matrix must be square, got {A.shape}")
        if b.shape != (A.shape[0],):
            raise SetError(f"center offset must have shape ({A.shape[0]},), got {b.shape}")
        if not (np.all(np.isfinite(A)) and np.all(np.isfinite(b))):
            raise SetError("ellipsoid data must be finite")
        scale = max(1.0, np.abs(A).max())
        if np.abs(A - A.T).max() > 1e-9 * scale:
            raise SetError("shape matrix must be symmetric")
        eigs = np.linalg.eigvalsh(A)
        if np.abs(eigs).min() <= 1e-12 * scale:
            raise SetError("shape matrix is singular; the ellipsoid would be unbounded")
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "b", b)

    @property
    def dim(self) -> int:
        return self.A.shape[0]

    @property
    def center(self) -> np.ndarray:
        return np.linalg.solve(self.A, -self.b)


ConvexSet = Box | Polytope | Ellipsoid


def dim_of(s: ConvexSet) -> int:
    return s.dim


def box_to_polytope(box: Box) -> Polytope:
    """Halfspace form of a box; infinite bounds contribute no facet."""
    rows = []
    offsets = []
    eye = np.eye(box.dim)
    for i in range(box.dim):
        if np.isfinite(box.upper[i]):
            rows.append(eye[i])
            offsets.append(box.upper[i])
        if np.isfinite(box.lower[i]):
            rows.append(-eye[i])
            offsets.append(-box.lower[i])
    if not rows:
        raise SetError("box has no finite bound, cannot form a facet description")
    return Polytope(np.asarray(rows), np.asarray(offsets))


def facets(s: ConvexSet) -> tuple[np.ndarray, np.ndarray]:
    """Facet description (A, b) of a box or polytope."""
    if isinstance(s, Box):
        p = box_to_polytope(s)
        return p.A, p.b
    if isinstance(s, Polytope):
        return s.A, s.b
    raise SetError(f"{type(s).__name__} has no facet description")


def support_value(s: ConvexSet, direction) -> float:
    """sup of d'x over the set; +inf for a box unbounded along d."""
    d = np.asarray(direction, dtype=float)
    if d.shape != (s.dim,):
        raise SetError(f"direction must have shape ({s.dim},), got {d.shape}")
    if isinstance(s, Box):
        terms = np.where(d >= 0, d * s.upper, d * s.lower)
        # 0 * inf would poison the sum; a zero coefficient contributes nothing.
        terms = np.where(d == 0, 0.0, terms)
        return float(np.sum(terms))
    if isinstance(s, Ellipsoid):
        y = np.linalg.solve(s.A, d)
        return float(-s.b @ y + np.linalg.norm(y))
    status, _, value = solve_lp_max(d, s.A, s.b)
    if status == "unbounded":
        raise SetError("polytope support is unbounded in this direction")
    if status == "infeasible":
        raise SetError("polytope is empty")
    return value


def contains_point(s: ConvexSet, x, tol: float = DEFAULT_TOL) -> bool:
    """Membership test with slack ``tol`` on the defining inequalities."""
    x = np.asarray(x, dtype=float)
    if x.shape != (s.dim,):
        raise SetError(f"point must have shape ({s.dim},), got {x.shape}")
    if isinstance(s, Box):
        return bool(np.all(x >= s.lower - tol) and np.all(x <= s.upper + tol))
    if isinstance(s, Polytope):
        scale = np.maximum(1.0, np.linalg.norm(s.A, axis=1))
        return bool(np.all(s.A @ x - s.b <= tol * scale))
    return bool(np.linalg.norm(s.A @ x + s.b) <= 1.0 + tol)


def contains_points(s: ConvexSet, pts: np.ndarray, tol: float = DEFAULT_TOL) -> np.ndarray:
    """Vectorized membership for an (N, dim) array of points."""
    pts = np.asarray(pts, dtype=float)
    if isinstance(s, Box):
        return np.all((pts >= s.lower - tol) & (pts <= s.upper + tol), axis=1)
    if isinstance(s, Polytope):
        scale = np.maximum(1.0, np.linalg.norm(s.A, axis=1))
        return np.all(pts @ s.A.T - s.b <= tol * scale, axis=1)
    return np.linalg.norm(pts @ s.A.T + s.b, axis=1) <= 1.0 + tol


def includes(outer: ConvexSet, inner: ConvexSet, tol: float = DEFAULT_TOL) -> bool:
    """Certified inclusion inner subset-of outer.

    The outer set must be a box or polytope; each outer facet is checked
    against the inner support value with slack ``tol`` per unit facet norm.
    """
    if inner.dim != outer.dim:
        raise SetError(f"dimension mismatch: inner {inner.dim}, outer {outer.dim}")
    if isinstance(outer, Ellipsoid):
        raise SetError("inclusion in an ellipsoid outer set is not supported")
    A, b = facets(outer)
    for a_i, b_i in zip(A, b):
        if support_value(inner, a_i) > b_i + tol * max(1.0, np.linalg.norm(a_i)):
            return False
    return True


def intersects(s: ConvexSet, avoid: ConvexSet, tol: float = DEFAULT_TOL) -> bool:
    """Conservative intersection test against a box or polytope.

    Returns False only with a certificate: either some avoid facet strictly
    separates the two sets, or (for polyhedral s) the stacked constraint
    system is infeasible. Otherwise returns True.
    """
    if s.dim != avoid.dim:
        raise SetError(f"dimension mismatch: set {s.dim}, avoid {avoid.dim}")
    if isinstance(avoid, Ellipsoid):
        raise SetError("intersection tests support box or polytope avoid regions only")
    A, b = facets(avoid)
    for a_i, b_i in zip(A, b):
        low = -support_value(s, -a_i)
        if low > b_i + tol * max(1.0, np.linalg.norm(a_i)):
            return False
    if isinstance(s, Ellipsoid):
        return True
    A_s, b_s = facets(s)
    return lp_feasible(np.vstack([A, A_s]), np.concatenate([b, b_s]))


def bounding_box(s: ConvexSet) -> Box:
    """Tightest axis-aligned box around the set, via support values."""
    eye = np.eye(s.dim)
    hi = np.array([support_value(s, eye[i]) for i in range(s.dim)])
    lo = np.array([-support_value(s, -eye[i]) for i in range(s.dim)])
    return Box(lo, hi)


def sample(s: ConvexSet, n: int, rng: np.random.Generator) -> np.ndarray:
    """Uniform samples from the set, shape (n, dim).

    Boxes sample coordinatewise, ellipsoids map a uniform ball, polytopes use
    rejection from the bounding box and fail after a million consecutive
    rejected draws.
    """
    if n <= 0:
        raise SetError(f"sample count must be positive, got {n}")
    if isinstance(s, Box):
        if not s.is_bounded:
            raise SetError("cannot sample an unbounded box")
        return rng.uniform(s.lower, s.upper, size=(n, s.dim))
    if isinstance(s, Ellipsoid):
        v = rng.standard_normal((n, s.dim))
        v /= np.maximum(np.linalg.norm(v, axis=1, keepdims=True), 1e-300)
        r = rng.random(n) ** (1.0 / s.dim)
        u = v * r[:, None]
        return np.linalg.solve(s.A, (u - s.b).T).T
    box = bounding_box(s)
    out = np.empty((n, s.dim))
    got = 0
    consecutive_rejects = 0
    while got < n:
        chunk = max(n - got, 256)
        cand = rng.uniform(box.lower, box.upper, size=(chunk, s.dim))
        ok = contains_points(s, cand, tol=0.0)
        hits = cand[ok]
        if hits.shape[0] == 0:
            consecutive_rejects += chunk
            if consecutive_rejects >= 1_000_000:
                raise SetError(
                    "rejection sampling failed: one million consecutive draws missed the polytope"
                )
        else:
            consecutive_rejects = 0
        take = min(hits.shape[0], n - got)
        out[got : got + take] = hits[:take]
        got += take
    return out


def polytope_vertices(p: Polytope) -> np.ndarray:
    """Vertices by facet enumeration: solve every n-subset of active facets.

    Independent of the LP path, so it doubles as an oracle for support values.
    Intended for low dimension / few facets.
    """
    m, n = p.A.shape
    if m < n:
        raise SetError("polytope has too few facets to have vertices")
    found = []
    for idx in itertools.combinations(range(m), n):
        sub = p.A[list(idx)]
        if abs(np.linalg.det(sub)) < 1e-12:
            continue
        v = np.linalg.solve(sub, p.b[list(idx)])
        scale = np.maximum(1.0, np.linalg.norm(p.A, axis=1))
        if np.all(p.A @ v - p.b <= 1e-9 * scale * max(1.0, np.abs(v).max())):
            found.append(v)
    if not found:
        raise SetError("polytope has no vertices (empty or unbounded)")
    pts = np.asarray(found)
    # Deduplicate up to tolerance.
    keep: list[np.ndarray] = []
    for v in pts:
        if all(np.linalg.norm(v - w) > 1e-8 * (1.0 + np.linalg.norm(v)) for w in keep):
            keep.append(v)
    return np.asarray(keep)


def _hull_2d(pts: np.ndarray) -> np.ndarray:
    """Convex hull of 2-D points in counterclockwise order (monotone chain)."""
    pts = pts[np.lexsort((pts[:, 1], pts[:, 0]))]
    if pts.shape[0] <= 2:
        return pts

    def half(seq):
        out: list[np.ndarray] = []
        for q in seq:
            while len(out) >= 2:
                a, b = out[-2], out[-1]
                if (b[0] - a[0]) * (q[1] - a[1]) - (b[1] - a[1]) * (q[0] - a[0]) <= 1e-14:
                    out.pop()
                else:
                    break
            out.append(q)
        return out

    lower = half(pts)
    upper = half(pts[::-1])
    return np.asarray(lower[:-1] + upper[:-1])


def boundary_points_2d(s: ConvexSet, dims: tuple[int, int] = (0, 1), n_arc: int = 128) -> np.ndarray:
    """Boundary of the set's shadow on two coordinates, for plotting.

    Boxes and polytopes yield hull vertices in counterclockwise order;
    ellipsoids yield an ``n_arc``-point polyline of the projected ellipse.
    """
    i, j = dims
    if not (0 <= i < s.dim and 0 <= j < s.dim and i != j):
        raise SetError(f"projection pair {dims} is invalid for dimension {s.dim}")
    if isinstance(s, Box):
        if not (np.isfinite(s.lower[[i, j]]).all() and np.isfinite(s.upper[[i, j]]).all()):
            raise SetError("cannot project a box that is unbounded on the chosen pair")
        lo = s.lower[[i, j]]
        hi = s.upper[[i, j]]
        return np.array([[lo[0], lo[1]], [hi[0], lo[1]], [hi[0], hi[1]], [lo[0], hi[1]]])
    if isinstance(s, Polytope):
        verts = polytope_vertices(s)
        return _hull_2d(verts[:, [i, j]])
    # Shadow of {x = center + A^-1 u, |u| <= 1} is the ellipse with shape
    # G = P A^-1 (P A^-1)' around the projected center.
    inv = np.linalg.inv(s.A)
    pa = inv[[i, j], :]
    center = s.center[[i, j]]
    g = pa @ pa.T
    # Take the symmetric square root of G.
    w, v = np.linalg.eigh(g)
    root = v @ np.diag(np.sqrt(np.maximum(w, 0.0))) @ v.T
    theta = np.linspace(0.0, 2.0 * np.pi, n_arc, endpoint=False)
    circle = np.stack([np.cos(theta), np.sin(theta)])
    return (center[:, None] + root @ circle).T


def set_to_json(s: ConvexSet) -> dict:
    if isinstance(s, Box):
        return {"type": "box", "lower": s.lower.tolist(), "upper": s.upper.tolist()}
    if isinstance(s, Polytope):
        return {"type": "polytope", "A": s.A.tolist(), "b": s.b.tolist()}
    return {"type": "ellipsoid", "A": s.A.tolist(), "b": s.b.tolist()}


def set_from_json(data: dict) -> ConvexSet:
    if not isinstance(data, dict) or "type" not in data:
        raise SetError("set document must be an object with a 'type' tag")
    kind = data["type"]
    try:
        if kind == "box":
            return Box(np.asarray(data["lower"], float), np.asarray(data["upper"], float))
        if kind == "polytope":
            return Polytope(np.asarray(data["A"], float), np.asarray(data["b"], float))
        if kind == "ellipsoid":
            return Ellipsoid(np.asarray(data["A"], float), np.asarray(data["b"], float))
    except KeyError as exc:
        raise SetError(f"set of type '{kind}' is missing field {exc}") from None
    raise SetError(f"unknown set type '{kind}'")
