"""Discrete-time linear time-varying plants and their closed loops.

A plant step is x+ = A x + B u + c with coordinatewise input bounds. The
closed loop feeds the plant with a ReLU network policy whose output is
clamped onto the step's input box.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import sets
from .network import FeedforwardNetwork, evaluate


class DynamicsError(ValueError):
    """Raised for malformed systems or inconsistent step data."""


@dataclass(frozen=True)
class LtvStep:
    """One time step of a linear plant with input box [u_lower, u_upper]."""

    A: np.ndarray
    B: np.ndarray
    c: np.ndarray
    u_lower: np.ndarray
    u_upper: np.ndarray

    def __post_init__(self):
        A = np.asarray(self.A, dtype=float)
        B = np.asarray(self.B, dtype=float)
        if A.ndim != 2 or A.shape[0] != A.shape[1]:
            raise DynamicsError(f"A must be square, got shape {A.shape}")
        if B.ndim != 2 or B.shape[0] != A.shape[0]:
            raise DynamicsError(f"B must have {A.shape[0]} rows, got shape {B.shape}")
        c = np.zeros(A.shape[0]) if self.c is None else np.asarray(self.c, dtype=float)
        if c.shape != (A.shape[0],):
            raise DynamicsError(f"c must have shape ({A.shape[0]},), got {c.shape}")
        lo = np.asarray(self.u_lower, dtype=float)
        hi = np.asarray(self.u_upper, dtype=float)
        n_u = B.shape[1]
        if lo.shape != (n_u,) or hi.shape != (n_u,):
            raise DynamicsError(f"input bounds must have shape ({n_u},)")
        if np.any(lo > hi):
            raise DynamicsError("input bounds must satisfy u_lower <= u_upper")
        for name, arr in (("A", A), ("B", B), ("c", c)):
            if not np.all(np.isfinite(arr)):
                raise DynamicsError(f"{name}: entries must be finite")
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "B", B)
        object.__setattr__(self, "c", c)
        object.__setattr__(self, "u_lower", lo)
        object.__setattr__(self, "u_upper", hi)

    @property
    def n_x(self) -> int:
        return self.A.shape[0]

    @property
    def n_u(self) -> int:
        return self.B.shape[1]


@dataclass(frozen=True)
class LtvSystem:
    """Plant over a horizon: either one repeated step or an explicit step list."""

    steps: tuple[LtvStep, ...]
    repeat: bool = True

    def __post_init__(self):
        steps = tuple(self.steps)
        if not steps:
            raise DynamicsError("a system needs at least one step")
        first = steps[0]
        for k, s in enumerate(steps):
            if s.n_x != first.n_x or s.n_u != first.n_u:
                raise DynamicsError(f"steps[{k}]: dimension mismatch with steps[0]")
        if self.repeat and len(steps) != 1:
            raise DynamicsError("a repeating system must have exactly one step")
        object.__setattr__(self, "steps", steps)

    @property
    def n_x(self) -> int:
        return self.steps[0].n_x

    @property
    def n_u(self) -> int:
        return self.steps[0].n_u

    def step_at(self, t: int) -> LtvStep:
        if t < 0:
            raise DynamicsError(f"step index must be nonnegative, got {t}")
        if self.repeat:
            return self.steps[0]
        if t >= len(self.steps):
            raise DynamicsError(
                f"step index {t} out of range for a {len(self.steps)}-step system"
            )
        return self.steps[t]

    def horizon_limit(self) -> int | None:
        """Largest usable horizon, or None when the system repeats forever."""
        return None if self.repeat else len(self.steps)


@dataclass(frozen=True)
class ClosedLoop:
    """Plant plus network policy; the policy output is clamped per step."""

    system: LtvSystem
    network: FeedforwardNetwork

    def __post_init__(self):
        if self.network.input_dim != self.system.n_x:
            raise DynamicsError(
                f"network input size {self.network.input_dim} does not match "
                f"state size {self.system.n_x}"
            )
        if self.network.output_dim != self.system.n_u:
            raise DynamicsError(
                f"network output size {self.network.output_dim} does not match "
                f"input size {self.system.n_u}"
            )


def step(system: LtvSystem, t: int, x, u) -> np.ndarray:
    """Apply step t of the plant to state x under input u (point or batch)."""
    s = system.step_at(t)
    x = np.asarray(x, dtype=float)
    u = np.asarray(u, dtype=float)
    if x.shape[-1] != s.n_x:
        raise DynamicsError(f"state has size {x.shape[-1]}, plant expects {s.n_x}")
    if u.shape[-1] != s.n_u:
        raise DynamicsError(f"input has size {u.shape[-1]}, plant expects {s.n_u}")
    return x @ s.A.T + u @ s.B.T + s.c


def closed_loop_step(loop: ClosedLoop, t: int, x) -> np.ndarray:
    """One closed-loop transition: clamp the policy output, then step the plant."""
    s = loop.system.step_at(t)
    u = np.clip(evaluate(loop.network, x), s.u_lower, s.u_upper)
    return step(loop.system, t, x, u)


def simulate_batch(
    loop: ClosedLoop, initial_set, n_steps: int, n_samples: int, seed: int
) -> list[np.ndarray]:
    """Roll sampled initial states through the closed loop.

    Returns n_steps + 1 arrays of shape (n_samples, n_x); entry t holds the
    states at time t. Sampling is uniform over the initial set and fully
    determined by ``seed``.
    """
    if n_steps < 0:
        raise DynamicsError(f"n_steps must be nonnegative, got {n_steps}")
    if n_samples <= 0:
        raise DynamicsError(f"n_samples must be positive, got {n_samples}")
    limit = loop.system.horizon_limit()
    if limit is not None and n_steps > limit:
        raise DynamicsError(f"horizon {n_steps} exceeds the {limit}-step system")
    rng = np.random.Generator(np.random.PCG64(seed))
    x = sets.sample(initial_set, n_samples, rng)
    if x.shape[1] != loop.system.n_x:
        raise DynamicsError(
            f"initial set dimension {x.shape[1]} does not match state size "
            f"{loop.system.n_x}"
        )
    clouds = [x]
    for t in range(n_steps):
        x = closed_loop_step(loop, t, x)
        clouds.append(x)
    return clouds


def _exp_series(A: np.ndarray, t_s: float, tol: float = 1e-16, max_terms: int = 200):
    """Power series for (expm(A t), integral of expm(A s) ds over [0, t]).

    Returns (A_d, Psi, n_terms). Terms are added until both current terms have
    max-norm below ``tol``; nilpotent A of index k therefore stops after the
    k nonzero terms.
    """
    n = A.shape[0]
    term = np.eye(n)
    a_d = np.eye(n)
    psi = t_s * np.eye(n)
    k = 0
    while True:
        k += 1
        term = term @ A * (t_s / k)
        psi_term = term * (t_s / (k + 1))
        a_d += term
        psi += psi_term
        if max(np.abs(term).max(), np.abs(psi_term).max()) < tol:
            return a_d, psi, k
        if k >= max_terms:
            raise DynamicsError(
                f"matrix exponential series did not converge within {max_terms} terms"
            )


def c2d_exact(A_c, B_c, c_c=None, t_s: float = 1.0):
    """Exact zero-order-hold discretization of dx/dt = A_c x + B_c u + c_c.

    Returns (A_d, B_d, c_d) with A_d = expm(A_c t_s) and B_d, c_d obtained from
    the exact integral of the matrix exponential, evaluated by power series.
    """
    A_c = np.asarray(A_c, dtype=float)
    B_c = np.asarray(B_c, dtype=float)
    if A_c.ndim != 2 or A_c.shape[0] != A_c.shape[1]:
        raise DynamicsError(f"A_c must be square, got shape {A_c.shape}")
    if B_c.ndim != 2 or B_c.shape[0] != A_c.shape[0]:
        raise DynamicsError(f"B_c must have {A_c.shape[0]} rows, got shape {B_c.shape}")
    if t_s <= 0:
        raise DynamicsError(f"sample time must be positive, got {t_s}")
    c_c = np.zeros(A_c.shape[0]) if c_c is None else np.asarray(c_c, dtype=float)
    if c_c.shape != (A_c.shape[0],):
        raise DynamicsError(f"c_c must have shape ({A_c.shape[0]},), got {c_c.shape}")
    a_d, psi, _ = _exp_series(A_c, float(t_s))
    return a_d, psi @ B_c, psi @ c_c


def _bound_to_json(v: np.ndarray) -> list:
    """Input bounds as JSON values: infinite entries become null (strict JSON
    has no Infinity literal)."""
    return [None if not np.isfinite(x) else float(x) for x in v]


def _bound_from_json(value, sign: float, where: str) -> np.ndarray:
    if not isinstance(value, (list, tuple)):
        raise DynamicsError(f"{where}: input bounds must be arrays")
    return np.array(
        [sign * np.inf if x is None else float(x) for x in value], dtype=float
    )


def system_to_json(system: LtvSystem) -> dict | list:
    def one(s: LtvStep) -> dict:
        return {
            "A": s.A.tolist(),
            "B": s.B.tolist(),
            "c": s.c.tolist(),
            "u_lower": _bound_to_json(s.u_lower),
            "u_upper": _bound_to_json(s.u_upper),
        }

    if system.repeat:
        rec = one(system.steps[0])
        rec["time_varying"] = False
        return rec
    return [one(s) for s in system.steps]


def _step_from_json(rec: dict, where: str) -> LtvStep:
    if not isinstance(rec, dict):
        raise DynamicsError(f"{where}: expected a JSON object")
    for key in ("A", "B", "u_lower", "u_upper"):
        if key not in rec:
            raise DynamicsError(f"{where}: missing field '{key}'")
    return LtvStep(
        A=np.asarray(rec["A"], dtype=float),
        B=np.asarray(rec["B"], dtype=float),
        c=None if rec.get("c") is None else np.asarray(rec["c"], dtype=float),
        u_lower=_bound_from_json(rec["u_lower"], -1.0, where),
        u_upper=_bound_from_json(rec["u_upper"], +1.0, where),
    )


def system_from_json(data) -> LtvSystem:
    """Parse a system document: one step object (repeated unless marked
    time-varying) or a list of per-step objects."""
    if isinstance(data, list):
        if not data:
            raise DynamicsError("system step list is empty")
        steps = tuple(_step_from_json(rec, f"steps[{k}]") for k, rec in enumerate(data))
        return LtvSystem(steps, repeat=False)
    if isinstance(data, dict):
        if data.get("time_varying", False):
            raise DynamicsError("a time-varying system must list its steps explicitly")
        return LtvSystem((_step_from_json(data, "system"),), repeat=True)
    raise DynamicsError("system document must be an object or a list of objects")
