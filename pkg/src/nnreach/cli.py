"""Command-line front end: run scenarios, simulate, re-check stored results.

Subcommands:

``reach``
    Compute the reach tube for a scenario, write ``result.json`` plus 2-D
    boundary geometry for plotting, print per-step diagnostics, and exit with
    0 (Verified), 1 (Unknown), 2 (Falsified), or 3 (error). The result file
    is always written before the verdict is printed.

``simulate``
    Sample closed-loop trajectories and write one point-cloud file per step.

``check``
    Re-verify a stored result against its scenario: rebuild every program,
    re-check the stored certificate points, re-solve from scratch, and test
    sampled-trajectory containment. Exit 0 only if everything passes.

All file outputs are deterministic functions of the scenario and seeds; wall
clock timing appears only on stdout.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import sets as cs
from .assembly import (
    AssemblyError,
    assemble_ellipsoid_program,
    assemble_facet_program,
    assemble_lmi,
    shape_from_solution,
)
from .batch import assemble_batch
from .dynamics import DynamicsError, simulate_batch
from .engine import (
    EngineError,
    ReachResult,
    ReachTemplate,
    evaluate_requirements,
    result_to_json,
    run,
    run_batch,
)
from .network import NetworkError
from .scenario import Scenario, ScenarioError, load_scenario
from .sets import SetError
from .solver import SolveStatus, check_solution, solve_linear, solve_maxdet

_VERDICT_EXIT = {"Verified": 0, "Unknown": 1, "Falsified": 2}


def _fmt(v: float) -> str:
    """Full-precision, round-trippable text for one float."""
    return repr(float(v))


def _write_csv(path: Path, header: list[str], rows: np.ndarray) -> None:
    with open(path, "w") as fh:
        fh.write(",".join(header) + "\n")
        for row in np.atleast_2d(rows):
            fh.write(",".join(_fmt(v) for v in row) + "\n")


def _apply_overrides(scn: Scenario, args) -> Scenario:
    """Fold command-line flags into the loaded scenario."""
    changes = {}
    if getattr(args, "template", None):
        if args.template == "polytope":
            if scn.template.kind != "polytope":
                changes["template"] = ReachTemplate.default(scn.n_x)
        else:
            changes["template"] = ReachTemplate(kind=args.template)
    if getattr(args, "multipliers", None):
        changes["multiplier_mode"] = args.multipliers
    if getattr(args, "samples", None) is not None:
        changes["falsify_samples"] = args.samples
    if getattr(args, "seed", None) is not None:
        changes["seed"] = args.seed
    opt_kw = {}
    for flag, key in (("tol_gap", "tol_gap"), ("tol_feas", "tol_feas"),
                      ("max_iter", "max_iter")):
        value = getattr(args, flag, None)
        if value is not None:
            opt_kw[key] = value
    if opt_kw:
        changes["options"] = scn.options.replace(**opt_kw)
    if not changes:
        return scn
    from dataclasses import replace

    return replace(scn, **changes)


def _emit_geometry(out: Path, result: ReachResult, scn: Scenario, fmt: str) -> list[Path]:
    """Write the 2-D shadow of every computed set for each projection pair.

    CSV mode writes one polyline file per set and pair; JSON mode writes a
    single geometry.json. Batch results only have the initial and final sets,
    in which case the final set keeps its true step index.
    """
    written: list[Path] = []
    if not scn.projections:
        return written
    indexed = list(enumerate(result.sets))
    if scn.mode == "batch" and len(result.sets) == 2:
        indexed = [(0, result.sets[0]), (result.horizon, result.sets[1])]
    if fmt == "json":
        doc = {"projections": []}
        for (i, j) in scn.projections:
            steps = []
            for t, s in indexed:
                pts = cs.boundary_points_2d(s, dims=(i, j))
                steps.append({"index": t, "points": [[float(a), float(b)] for a, b in pts]})
            doc["projections"].append({"dims": [i, j], "steps": steps})
        path = out / "geometry.json"
        with open(path, "w") as fh:
            json.dump(doc, fh, indent=2)
            fh.write("\n")
        return [path]
    for (i, j) in scn.projections:
        for t, s in indexed:
            pts = cs.boundary_points_2d(s, dims=(i, j))
            stem = "initial" if t == 0 else f"reach_step{t:02d}"
            path = out / f"{stem}_x{i}x{j}.csv"
            _write_csv(path, [f"x{i}", f"x{j}"], pts)
            written.append(path)
    return written


def cmd_reach(args) -> int:
    scn = _apply_overrides(load_scenario(args.scenario), args)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)

    driver = run_batch if scn.mode == "batch" else run
    result = driver(
        scn.loop,
        scn.initial_set,
        scn.horizon,
        scn.template,
        goal=scn.goal,
        avoids=scn.avoids,
        multiplier_mode=scn.multiplier_mode,
        options=scn.options,
        falsify_samples=scn.falsify_samples,
        seed=scn.seed,
    )

    doc = {"scenario": scn.name, "mode": scn.mode}
    doc.update(result_to_json(result))
    result_path = out / "result.json"
    with open(result_path, "w") as fh:
        json.dump(doc, fh, indent=2)
        fh.write("\n")
    geometry = _emit_geometry(out, result, scn, args.format)

    print(f"scenario '{scn.name}': horizon {scn.horizon}, mode {scn.mode}, "
          f"template {scn.template.kind}, multipliers {scn.multiplier_mode}")
    for info in result.steps:
        iters = sum(r.iterations or 0 for r in info.solves)
        statuses = {r.status for r in info.solves}
        status = "all optimal" if statuses == {"optimal"} else ", ".join(
            f"{r.name}: {r.status}" for r in info.solves if r.status != "optimal"
        )
        print(f"  step {info.index:2d}: {len(info.solves)} solves, "
              f"{iters} iterations, {info.seconds:.2f}s, {status}")
    for msg in result.messages:
        print(f"  {msg}")
    print(f"wrote {result_path} and {len(geometry)} geometry file(s) to {out}")
    print(f"verdict: {result.verdict}")
    return _VERDICT_EXIT[result.verdict]


def cmd_simulate(args) -> int:
    scn = load_scenario(args.scenario)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    n = args.samples if args.samples is not None else scn.falsify_samples
    seed = args.seed if args.seed is not None else scn.seed
    traj = simulate_batch(scn.loop, scn.initial_set, scn.horizon, n, seed)
    header = [f"x{i}" for i in range(scn.n_x)]
    if args.format == "json":
        doc = {"steps": [
            {"index": t, "points": [[float(v) for v in row] for row in cloud]}
            for t, cloud in enumerate(traj)
        ]}
        path = out / "clouds.json"
        with open(path, "w") as fh:
            json.dump(doc, fh, indent=2)
            fh.write("\n")
        print(f"wrote {path} ({len(traj)} steps x {n} samples, seed {seed})")
    else:
        for t, cloud in enumerate(traj):
            _write_csv(out / f"cloud_step{t:02d}.csv", header, cloud)
        print(f"wrote {len(traj)} cloud files x {n} samples to {out} (seed {seed})")
    return 0


class _CheckLog:
    def __init__(self):
        self.failures = 0
        self.count = 0

    def note(self, ok: bool, message: str) -> None:
        self.count += 1
        if not ok:
            self.failures += 1
        print(f"  [{'ok' if ok else 'FAIL'}] {message}")


def _check_one_solve(log, prob, rec: dict, stored_offset: float | None,
                     fresh_solver, options) -> None:
    """Re-verify one stored solve record against its rebuilt program."""
    name = rec["name"]
    if rec["status"] != "optimal":
        log.note(True, f"{name}: recorded as '{rec['status']}', nothing to certify")
        return
    y = rec.get("y")
    if y is None or len(y) != prob.n_vars:
        log.note(False, f"{name}: stored point missing or wrong size")
        return
    y = np.asarray(y, dtype=float)

    worst = max(
        float(np.linalg.eigvalsh(prob.materialize(y, k))[-1])
        for k in range(prob.n_blocks)
    )
    sign = float(prob.ineq_residual(y).max()) if prob.g.shape[0] else 0.0
    feas_ok = worst <= 1e-6 and sign <= 1e-7
    log.note(feas_ok, f"{name}: stored point feasibility "
                      f"(max eig {worst:.2e}, sign {sign:.2e})")

    stored_obj = rec["objective"]
    if hasattr(prob.objective, "c"):
        attained = float(prob.objective.c @ y)
    else:
        a, _ = shape_from_solution(prob.layout, y, prob.objective.dim)
        attained = float(np.linalg.slogdet(a)[1])
    obj_ok = abs(attained - stored_obj) <= 1e-6 * (1.0 + abs(stored_obj))
    log.note(obj_ok, f"{name}: stored objective {stored_obj:.9g} matches "
                     f"the stored point ({attained:.9g})")
    if stored_offset is not None:
        off_ok = abs(stored_offset - stored_obj) <= 1e-6 * (1.0 + abs(stored_obj))
        log.note(off_ok, f"{name}: result-set offset {stored_offset:.9g} matches "
                         f"the recorded objective")

    sol = fresh_solver(prob, options)
    if sol.status != SolveStatus.OPTIMAL:
        log.note(False, f"{name}: fresh solve ended '{sol.status.value}'")
        return
    report = check_solution(prob, sol, options=options)
    log.note(report.ok, f"{name}: fresh solve certificate"
                        + ("" if report.ok else f" ({'; '.join(report.messages)})"))
    fresh_ok = abs(sol.objective - stored_obj) <= 1e-5 * (1.0 + abs(stored_obj))
    log.note(fresh_ok, f"{name}: fresh optimum {sol.objective:.9g} agrees with stored")


def cmd_check(args) -> int:
    scn = load_scenario(args.scenario)
    try:
        with open(args.result) as fh:
            doc = json.load(fh)
    except OSError as exc:
        raise ScenarioError(f"cannot read result file: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ScenarioError(f"result file is not valid JSON: {exc}") from exc

    log = _CheckLog()
    stored_sets = [cs.set_from_json(s) for s in doc.get("sets", [])]
    if not stored_sets:
        print("result file contains no sets")
        return 1
    records = doc.get("steps", [])
    mode = doc.get("mode", "recursive")
    system = scn.loop.system
    net = scn.loop.network

    for k, rec in enumerate(records):
        template = rec["template"]
        batch = template.startswith("batch-")
        kind = template.removeprefix("batch-")
        if batch:
            skel = assemble_batch(
                stored_sets[0], net, system, rec["index"],
                multiplier_mode=rec["multiplier_mode"],
            )
            out_set = stored_sets[-1]
        else:
            skel = assemble_lmi(
                stored_sets[k], net, system.step_at(rec["index"]),
                multiplier_mode=rec["multiplier_mode"],
                projected=rec["projected"],
            )
            if k + 1 >= len(stored_sets):
                log.note(False, f"step {rec['index']}: output set missing")
                continue
            out_set = stored_sets[k + 1]

        if kind == "ellipsoid":
            prob = assemble_ellipsoid_program(skel)
            _check_one_solve(log, prob, rec["solves"][0], None, solve_maxdet,
                             scn.options)
            if rec["solves"][0].get("y") is not None:
                a, b = shape_from_solution(
                    prob.layout,
                    np.asarray(rec["solves"][0]["y"], dtype=float),
                    system.n_x,
                )
                drift = max(
                    float(np.abs(a - out_set.A).max()),
                    float(np.abs(b - out_set.b).max()),
                )
                log.note(drift <= 1e-9,
                         f"step {rec['index']}: stored ellipsoid matches the "
                         f"stored point (drift {drift:.2e})")
        else:
            if kind == "box":
                eye = np.eye(system.n_x)
                normals = np.vstack([eye, -eye])
                offs = np.concatenate([out_set.upper, -out_set.lower])
            else:
                normals, offs = out_set.A, out_set.b
            if len(rec["solves"]) != len(normals):
                log.note(False, f"step {rec['index']}: {len(rec['solves'])} solves "
                                f"recorded for {len(normals)} facets")
                continue
            for i, solve_rec in enumerate(rec["solves"]):
                prob = assemble_facet_program(skel, normals[i])
                _check_one_solve(log, prob, solve_rec, float(offs[i]),
                                 solve_linear, scn.options)

    # Containment oracle: sampled trajectories must stay inside the stored
    # sets at every step for which a set exists.
    traj = simulate_batch(scn.loop, scn.initial_set, scn.horizon, args.samples,
                          args.seed if args.seed is not None else scn.seed)
    if mode == "batch":
        pairs = [(0, stored_sets[0])]
        if len(stored_sets) > 1:
            pairs.append((doc["horizon"], stored_sets[-1]))
    else:
        pairs = list(enumerate(stored_sets))
    for t, s in pairs:
        inside = cs.contains_points(s, traj[t], tol=1e-6)
        log.note(bool(inside.all()),
                 f"step {t}: {int(inside.sum())}/{len(inside)} sampled states "
                 f"inside the stored set")

    if doc.get("verdict") == "Verified" and doc.get("failure") is None \
            and mode == "recursive" and len(stored_sets) == scn.horizon + 1:
        ok, _ = evaluate_requirements(stored_sets, scn.goal, scn.avoids)
        log.note(ok, "stored 'Verified' verdict re-established from the stored sets")

    print(f"{log.count} checks, {log.failures} failure(s)")
    return 0 if log.failures == 0 else 1


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="nnreach",
        description="Reachability certificates for linear plants driven by "
                    "ReLU network policies.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, with_format=True):
        p.add_argument("--scenario", required=True, help="scenario JSON file")
        p.add_argument("--out", default="nnreach-out", help="output directory")
        if with_format:
            p.add_argument("--format", choices=("csv", "json"), default="csv",
                           help="geometry/cloud file format")
        p.add_argument("--seed", type=int, default=None,
                       help="override the scenario's sampling seed")
        p.add_argument("--samples", type=int, default=None,
                       help="override the scenario's sample count")

    p_reach = sub.add_parser("reach", help="compute the reach tube and verdict")
    common(p_reach)
    p_reach.add_argument("--template", choices=("polytope", "box", "ellipsoid"),
                         default=None, help="override the scenario's template")
    p_reach.add_argument("--multipliers", choices=("full", "diag"), default=None,
                         help="override the multiplier richness")
    p_reach.add_argument("--tol-gap", type=float, default=None, dest="tol_gap")
    p_reach.add_argument("--tol-feas", type=float, default=None, dest="tol_feas")
    p_reach.add_argument("--max-iter", type=int, default=None, dest="max_iter")
    p_reach.set_defaults(func=cmd_reach)

    p_sim = sub.add_parser("simulate", help="sample closed-loop trajectories")
    common(p_sim)
    p_sim.set_defaults(func=cmd_simulate)

    p_check = sub.add_parser("check", help="re-verify a stored result")
    p_check.add_argument("--scenario", required=True, help="scenario JSON file")
    p_check.add_argument("--result", required=True, help="stored result.json")
    p_check.add_argument("--samples", type=int, default=1000,
                         help="containment-oracle sample count")
    p_check.add_argument("--seed", type=int, default=None)
    p_check.set_defaults(func=cmd_check)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ScenarioError, SetError, DynamicsError, NetworkError,
            AssemblyError, EngineError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
