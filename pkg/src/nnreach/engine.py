"""Reach-set computation for linear plants in feedback with ReLU policies.

Each step bounds the image of the current set under the closed loop by
solving template programs over one shared certificate: per-facet support
minimization for polyhedral templates, or a maximum-determinant enclosing
ellipsoid. Chaining steps yields the recursive pipeline. Requirements (goal
containment, region avoidance) are decided on the outer approximations;
when they cannot be established, trajectory sampling may still produce a
concrete counterexample, separating "Falsified" from "Unknown".
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from . import sets as cs
from .assembly import (
    assemble_ellipsoid_program,
    assemble_facet_program,
    assemble_lmi,
    shape_from_solution,
)
from .batch import assemble_batch
from .dynamics import ClosedLoop, LtvStep, simulate_batch
from .network import FeedforwardNetwork
from .solver import SolveStatus, SolverOptions, solve_linear, solve_maxdet

_FALSIFY_MARGIN = 1e-7


class EngineError(RuntimeError):
    pass


class StepFailure(EngineError):
    """A template program of one reach step did not solve to optimality."""

    def __init__(self, index: int, name: str, status: SolveStatus):
        self.index = index
        self.name = name
        self.status = status
        super().__init__(
            f"step {index}: '{name}' program ended with status '{status.value}'"
        )


@dataclass(frozen=True)
class ReachTemplate:
    """Shape family for the per-step outer approximations.

    ``box`` uses the 2n axis-aligned facets, ``polytope`` a caller-supplied
    normal matrix (normalized to unit rows before solving), ``ellipsoid``
    the maximum-determinant enclosing ellipsoid.
    """

    kind: str
    normals: np.ndarray | None = None

    def __post_init__(self):
        if self.kind not in ("box", "polytope", "ellipsoid"):
            raise EngineError(f"unknown template kind '{self.kind}'")
        if self.kind == "polytope":
            a = np.asarray(self.normals, dtype=float)
            if a.ndim != 2 or a.shape[0] == 0:
                raise EngineError("polytope template needs a nonempty normal matrix")
            if not np.isfinite(a).all():
                raise EngineError("template normals must be finite")
            norms = np.linalg.norm(a, axis=1)
            if np.any(norms == 0):
                raise EngineError("template normals must be nonzero")
            object.__setattr__(self, "normals", a / norms[:, None])
        elif self.normals is not None:
            raise EngineError(f"'{self.kind}' template takes no normals")

    def facet_normals(self, n_x: int) -> np.ndarray:
        if self.kind == "box":
            eye = np.eye(n_x)
            return np.vstack([eye, -eye])
        if self.kind == "polytope":
            if self.normals.shape[1] != n_x:
                raise EngineError(
                    f"template normals have {self.normals.shape[1]} columns, "
                    f"state dimension is {n_x}"
                )
            return self.normals
        raise EngineError("ellipsoid template has no facets")

    @classmethod
    def default(cls, n_x: int, n_random: int = 0, seed: int = 0) -> "ReachTemplate":
        """Standard polytope template: in the plane, axes and diagonals
        (8 facets); in higher dimension the 2n axis facets, optionally padded
        with random unit directions."""
        if n_x == 2:
            rows = np.array(
                [[1, 0], [-1, 0], [0, 1], [0, -1], [1, -1], [-1, 1], [1, 1], [-1, -1]],
                dtype=float,
            )
        else:
            eye = np.eye(n_x)
            rows = np.vstack([eye, -eye])
        if n_random > 0:
            rng = np.random.Generator(np.random.PCG64(seed))
            extra = rng.standard_normal((n_random, n_x))
            extra /= np.linalg.norm(extra, axis=1)[:, None]
            rows = np.vstack([rows, extra])
        return cls(kind="polytope", normals=rows)


@dataclass
class SolveRecord:
    """One template program's outcome inside a reach step."""

    name: str
    status: str
    objective: float | None
    iterations: int | None
    y: np.ndarray | None


@dataclass
class StepInfo:
    index: int
    template: str
    multiplier_mode: str
    projected: bool
    solves: list[SolveRecord] = field(default_factory=list)
    seconds: float = 0.0  # wall time; reported on stdout, kept out of files


def _use_projection(step: LtvStep) -> bool:
    lo_fin = np.isfinite(step.u_lower)
    hi_fin = np.isfinite(step.u_upper)
    if lo_fin.all() and hi_fin.all():
        return True
    if not lo_fin.any() and not hi_fin.any():
        return False
    raise EngineError(
        "policy clamp bounds must be all finite or all infinite in one step"
    )


def reach_step(
    input_set: cs.ConvexSet,
    net: FeedforwardNetwork,
    step: LtvStep,
    template: ReachTemplate,
    index: int = 0,
    multiplier_mode: str = "full",
    options: SolverOptions | None = None,
) -> tuple[cs.ConvexSet, StepInfo]:
    """Outer-approximate the one-step image of ``input_set``.

    Raises StepFailure when any template program fails to reach optimality;
    soundness of a returned set rests on those optimality certificates.
    """
    opts = options or SolverOptions()
    projected = _use_projection(step)
    skel = assemble_lmi(
        input_set, net, step, multiplier_mode=multiplier_mode, projected=projected
    )
    info = StepInfo(index, template.kind, multiplier_mode, projected)
    return _solve_templates(skel, template, step.A.shape[0], index, info, opts), info


def _solve_templates(
    skel, template: ReachTemplate, n_x: int, index: int, info: StepInfo,
    opts: SolverOptions,
) -> cs.ConvexSet:
    """Run the template programs of one assembled certificate skeleton."""
    start = time.perf_counter()
    try:
        if template.kind == "ellipsoid":
            prob = assemble_ellipsoid_program(skel)
            sol = solve_maxdet(prob, opts)
            info.solves.append(
                SolveRecord(
                    "ellipsoid", sol.status.value, sol.objective,
                    sol.diagnostics.get("iterations"),
                    None if sol.y is None else np.asarray(sol.y, dtype=float),
                )
            )
            if sol.status != SolveStatus.OPTIMAL:
                raise StepFailure(index, "ellipsoid", sol.status)
            a, b = shape_from_solution(prob.layout, sol.y, n_x)
            return cs.Ellipsoid(a, b)

        normals = template.facet_normals(n_x)
        offsets = np.zeros(len(normals))
        for i, a in enumerate(normals):
            prob = assemble_facet_program(skel, a)
            sol = solve_linear(prob, opts)
            name = f"facet {i}"
            info.solves.append(
                SolveRecord(
                    name, sol.status.value, sol.objective,
                    sol.diagnostics.get("iterations"),
                    None if sol.y is None else np.asarray(sol.y, dtype=float),
                )
            )
            if sol.status != SolveStatus.OPTIMAL:
                raise StepFailure(index, name, sol.status)
            offsets[i] = sol.objective
        if template.kind == "box":
            hi = offsets[:n_x]
            lo = -offsets[n_x:]
            return cs.Box(lo, np.maximum(hi, lo))
        return cs.Polytope(normals, offsets)
    finally:
        info.seconds = time.perf_counter() - start


def batch_reach(
    loop: ClosedLoop,
    initial_set: cs.ConvexSet,
    n_steps: int,
    template: ReachTemplate,
    multiplier_mode: str = "full",
    options: SolverOptions | None = None,
) -> tuple[cs.ConvexSet, StepInfo]:
    """Outer-approximate the N-step image with one certificate (no chaining).

    Only available when every step leaves the policy output unclamped
    (all bounds infinite); clamp stages are not representable on the
    stacked basis.
    """
    opts = options or SolverOptions()
    skel = assemble_batch(
        initial_set, loop.network, loop.system, n_steps,
        multiplier_mode=multiplier_mode,
    )
    info = StepInfo(n_steps, f"batch-{template.kind}", multiplier_mode, False)
    result = _solve_templates(
        skel, template, loop.system.n_x, n_steps, info, opts
    )
    return result, info


def reach_sequence(
    loop: ClosedLoop,
    initial_set: cs.ConvexSet,
    n_steps: int,
    template: ReachTemplate,
    multiplier_mode: str = "full",
    options: SolverOptions | None = None,
) -> tuple[list[cs.ConvexSet], list[StepInfo], StepFailure | None]:
    """Chain reach steps from the initial set over the horizon.

    Returns the reach tube (initial set first), per-step solve records, and
    the failure that cut the recursion short, if any.
    """
    limit = loop.system.horizon_limit()
    if limit is not None and n_steps > limit:
        raise EngineError(f"horizon {n_steps} exceeds the {limit} stored steps")
    tube: list[cs.ConvexSet] = [initial_set]
    infos: list[StepInfo] = []
    for t in range(n_steps):
        try:
            s, info = reach_step(
                tube[-1], loop.network, loop.system.step_at(t), template,
                index=t, multiplier_mode=multiplier_mode, options=options,
            )
        except StepFailure as failure:
            return tube, infos, failure
        tube.append(s)
        infos.append(info)
    return tube, infos, None


@dataclass(frozen=True)
class AvoidSpec:
    """A region the state must stay out of (or, with ``complement`` True,
    a region the state must stay inside) at the given steps (all, if None)."""

    region: cs.ConvexSet
    complement: bool = False
    steps: tuple[int, ...] | None = None
    label: str = ""

    def active_steps(self, horizon: int) -> tuple[int, ...]:
        if self.steps is None:
            return tuple(range(horizon + 1))
        return tuple(t for t in self.steps if 0 <= t <= horizon)

    def name(self, i: int) -> str:
        return self.label or f"avoid[{i}]"


def evaluate_requirements(
    tube: list[cs.ConvexSet],
    goal: cs.ConvexSet | None,
    avoids: tuple[AvoidSpec, ...] = (),
) -> tuple[bool, list[str]]:
    """Decide goal containment and avoidance on the outer approximations.

    A True verdict is sound: the true reach sets are subsets of the tube, so
    whatever holds for the tube holds for them. A False verdict only means
    the approximations could not establish the requirement.
    """
    horizon = len(tube) - 1
    ok = True
    messages = []
    if goal is not None:
        if cs.includes(goal, tube[-1]):
            messages.append(f"goal contains the step-{horizon} reach set")
        else:
            ok = False
            messages.append(f"goal containment not established at step {horizon}")
    for i, spec in enumerate(avoids):
        bad_steps = []
        for t in spec.active_steps(horizon):
            if spec.complement:
                fine = cs.includes(spec.region, tube[t])
            else:
                fine = not cs.intersects(tube[t], spec.region)
            if not fine:
                bad_steps.append(t)
        if bad_steps:
            ok = False
            messages.append(
                f"{spec.name(i)} not established at steps {bad_steps}"
            )
        else:
            messages.append(f"{spec.name(i)} holds at all checked steps")
    if goal is None and not avoids:
        messages.append("no requirements given; reach sets computed only")
    return ok, messages


def find_counterexample(
    loop: ClosedLoop,
    initial_set: cs.ConvexSet,
    n_steps: int,
    goal: cs.ConvexSet | None,
    avoids: tuple[AvoidSpec, ...] = (),
    n_samples: int = 10000,
    seed: int = 0,
) -> dict | None:
    """Search sampled closed-loop trajectories for a concrete violation.

    Violations must clear a small margin so that boundary-grazing samples
    are never promoted to counterexamples.
    """
    if goal is None and not avoids:
        return None
    traj = simulate_batch(loop, initial_set, n_steps, n_samples, seed)

    def found(kind, label, t, i):
        return {
            "kind": kind,
            "label": label,
            "step": t,
            "sample": int(i),
            "x0": traj[0][i].copy(),
            "x": traj[t][i].copy(),
        }

    if goal is not None:
        inside = cs.contains_points(goal, traj[-1], tol=_FALSIFY_MARGIN)
        if not inside.all():
            i = int(np.argmin(inside))
            return found("goal-miss", "goal", n_steps, i)
    for k, spec in enumerate(avoids):
        for t in spec.active_steps(n_steps):
            if spec.complement:
                hit = ~cs.contains_points(spec.region, traj[t], tol=_FALSIFY_MARGIN)
            else:
                hit = cs.contains_points(spec.region, traj[t], tol=-_FALSIFY_MARGIN)
            if hit.any():
                i = int(np.argmax(hit))
                return found("avoid-hit", spec.name(k), t, i)
    return None


@dataclass
class ReachResult:
    verdict: str  # "Verified" | "Falsified" | "Unknown"
    horizon: int
    sets: list[cs.ConvexSet]
    steps: list[StepInfo]
    messages: list[str]
    counterexample: dict | None = None
    failure: str | None = None


def run(
    loop: ClosedLoop,
    initial_set: cs.ConvexSet,
    n_steps: int,
    template: ReachTemplate,
    goal: cs.ConvexSet | None = None,
    avoids: tuple[AvoidSpec, ...] = (),
    multiplier_mode: str = "full",
    options: SolverOptions | None = None,
    falsify_samples: int = 10000,
    seed: int = 0,
) -> ReachResult:
    """Compute the reach tube and decide the requirements.

    Verdicts: "Verified" when every requirement holds on the outer
    approximations; "Falsified" when a sampled trajectory concretely
    violates a requirement; "Unknown" otherwise (approximations too loose,
    or a solver failure cut the tube short).
    """
    tube, infos, failure = reach_sequence(
        loop, initial_set, n_steps, template,
        multiplier_mode=multiplier_mode, options=options,
    )
    messages: list[str] = []
    cex = None
    if failure is not None:
        messages.append(str(failure))
        verdict = "Unknown"
        if goal is not None or avoids:
            cex = find_counterexample(
                loop, initial_set, n_steps, goal, avoids, falsify_samples, seed
            )
            if cex is not None:
                verdict = "Falsified"
                messages.append(_describe_cex(cex))
    else:
        ok, req_messages = evaluate_requirements(tube, goal, avoids)
        messages.extend(req_messages)
        if ok:
            verdict = "Verified"
        else:
            cex = find_counterexample(
                loop, initial_set, n_steps, goal, avoids, falsify_samples, seed
            )
            if cex is None:
                verdict = "Unknown"
                messages.append(
                    f"no violation found in {falsify_samples} sampled trajectories"
                )
            else:
                verdict = "Falsified"
                messages.append(_describe_cex(cex))
    return ReachResult(
        verdict=verdict,
        horizon=n_steps,
        sets=tube,
        steps=infos,
        messages=messages,
        counterexample=cex,
        failure=str(failure) if failure is not None else None,
    )


def run_batch(
    loop: ClosedLoop,
    initial_set: cs.ConvexSet,
    n_steps: int,
    template: ReachTemplate,
    goal: cs.ConvexSet | None = None,
    avoids: tuple[AvoidSpec, ...] = (),
    multiplier_mode: str = "full",
    options: SolverOptions | None = None,
    falsify_samples: int = 10000,
    seed: int = 0,
) -> ReachResult:
    """One-certificate variant of ``run``: a single program bounds the N-step
    image, so only the initial and final sets exist.

    Requirements at intermediate steps cannot be established (no sets there)
    and leave the verdict at best Unknown; sampled falsification still covers
    the whole horizon.
    """
    messages: list[str] = []
    cex = None
    failure = None
    try:
        final, info = batch_reach(
            loop, initial_set, n_steps, template,
            multiplier_mode=multiplier_mode, options=options,
        )
        sets_out = [initial_set, final]
        infos = [info]
    except StepFailure as fail:
        failure = fail
        sets_out = [initial_set]
        infos = []
    if failure is not None:
        messages.append(str(failure))
        ok = False
    else:
        ok = True
        if goal is not None:
            if cs.includes(goal, final):
                messages.append(f"goal contains the step-{n_steps} reach set")
            else:
                ok = False
                messages.append(f"goal containment not established at step {n_steps}")
        for i, spec in enumerate(avoids):
            checkable = {0: initial_set, n_steps: final}
            skipped = []
            bad = []
            for t in spec.active_steps(n_steps):
                if t not in checkable:
                    skipped.append(t)
                    continue
                if spec.complement:
                    fine = cs.includes(spec.region, checkable[t])
                else:
                    fine = not cs.intersects(checkable[t], spec.region)
                if not fine:
                    bad.append(t)
            if bad:
                ok = False
                messages.append(f"{spec.name(i)} not established at steps {bad}")
            if skipped:
                ok = False
                messages.append(
                    f"{spec.name(i)} cannot be checked at steps {skipped}: "
                    "no intermediate sets in batch mode"
                )
            if not bad and not skipped:
                messages.append(f"{spec.name(i)} holds at all checked steps")
        if goal is None and not avoids:
            messages.append("no requirements given; reach sets computed only")
    if failure is None and ok:
        verdict = "Verified"
    elif goal is None and not avoids:
        verdict = "Unknown" if failure is not None else "Verified"
    else:
        cex = find_counterexample(
            loop, initial_set, n_steps, goal, avoids, falsify_samples, seed
        )
        if cex is None:
            verdict = "Unknown"
            messages.append(
                f"no violation found in {falsify_samples} sampled trajectories"
            )
        else:
            verdict = "Falsified"
            messages.append(_describe_cex(cex))
    return ReachResult(
        verdict=verdict,
        horizon=n_steps,
        sets=sets_out,
        steps=infos,
        messages=messages,
        counterexample=cex,
        failure=str(failure) if failure is not None else None,
    )


def _describe_cex(cex: dict) -> str:
    x = np.array2string(np.asarray(cex["x"]), precision=6)
    return (
        f"counterexample ({cex['kind']}, {cex['label']}): sample {cex['sample']} "
        f"reaches {x} at step {cex['step']}"
    )


def result_to_json(result: ReachResult) -> dict:
    """Deterministic JSON form of a result (no wall-clock data)."""

    def solve_json(rec: SolveRecord) -> dict:
        return {
            "name": rec.name,
            "status": rec.status,
            "objective": rec.objective,
            "iterations": rec.iterations,
            "y": None if rec.y is None else [float(v) for v in rec.y],
        }

    out = {
        "verdict": result.verdict,
        "horizon": result.horizon,
        "messages": list(result.messages),
        "failure": result.failure,
        "sets": [cs.set_to_json(s) for s in result.sets],
        "steps": [
            {
                "index": info.index,
                "template": info.template,
                "multiplier_mode": info.multiplier_mode,
                "projected": info.projected,
                "solves": [solve_json(r) for r in info.solves],
            }
            for info in result.steps
        ],
        "counterexample": None,
    }
    if result.counterexample is not None:
        cex = dict(result.counterexample)
        cex["x0"] = [float(v) for v in cex["x0"]]
        cex["x"] = [float(v) for v in cex["x"]]
        out["counterexample"] = cex
    return out
