"""Scenario files: one JSON document describing a verification problem.

A scenario bundles the plant, the network policy (by file path), the initial
set, the horizon, the template family, the requirements (goal set and avoid
regions), and run options. Loading resolves the network path relative to the
scenario file and validates all cross-references (dimensions, horizon).

Document layout::

    {
      "name": "...",                      // optional, defaults to file stem
      "system": { ... } | [ ... ],        // plant document (see dynamics), or
                                          // {"continuous": {"A","B","c"?},
                                          //  "t_s": 0.1, "u_lower": [...],
                                          //  "u_upper": [...]} for exact
                                          // zero-order-hold discretization
      "network_path": "networks/x.json",  // relative to this file
      "x0": {"type": "box"|"polytope"|"ellipsoid", ...},
      "horizon": 6,
      "template": "default" | {"kind": "polytope", "normals": [[...], ...]}
                  | {"kind": "box"} | {"kind": "ellipsoid"}
                  | {"kind": "default", "n_random": 4, "seed": 0},
      "goal": { set } | null,             // optional
      "avoid": [ {"region": { set }, "complement": false,
                  "steps": [0, 1] | null, "label": "..."} ],
      "solver_opts": {"tol_gap": ..., "tol_feas": ..., "max_iter": ...},
      "multiplier_mode": "full" | "diag",
      "falsification": {"samples": 10000, "seed": 0},
      "projections": [[0, 1], [0, 2]],    // 2-D geometry output pairs
      "mode": "recursive" | "batch"
    }

Input bounds use null for an unbounded side (strict JSON has no Infinity).
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import sets as cs
from .dynamics import ClosedLoop, LtvStep, LtvSystem, c2d_exact, system_from_json
from .engine import AvoidSpec, ReachTemplate
from .network import FeedforwardNetwork, load_network
from .solver import SolverOptions


class ScenarioError(ValueError):
    """Raised for malformed or inconsistent scenario documents."""


@dataclass(frozen=True)
class Scenario:
    """A fully resolved verification problem, ready to run."""

    name: str
    loop: ClosedLoop
    initial_set: cs.ConvexSet
    horizon: int
    template: ReachTemplate
    goal: cs.ConvexSet | None = None
    avoids: tuple[AvoidSpec, ...] = ()
    multiplier_mode: str = "full"
    options: SolverOptions = field(default_factory=SolverOptions)
    falsify_samples: int = 10000
    seed: int = 0
    projections: tuple[tuple[int, int], ...] = ()
    mode: str = "recursive"  # "recursive" | "batch"

    @property
    def n_x(self) -> int:
        return self.loop.system.n_x


_KNOWN_KEYS = {
    "name", "system", "network_path", "x0", "horizon", "template", "goal",
    "avoid", "solver_opts", "multiplier_mode", "falsification", "projections",
    "mode",
}


def _require(data: dict, key: str):
    if key not in data:
        raise ScenarioError(f"scenario is missing required field '{key}'")
    return data[key]


def _parse_system(doc) -> LtvSystem:
    if isinstance(doc, dict) and "continuous" in doc:
        cont = doc["continuous"]
        if not isinstance(cont, dict):
            raise ScenarioError("'continuous' must be an object with A, B and optional c")
        for key in ("A", "B"):
            if key not in cont:
                raise ScenarioError(f"continuous system is missing '{key}'")
        if "t_s" not in doc:
            raise ScenarioError("a continuous system needs a sample time 't_s'")
        a_d, b_d, c_d = c2d_exact(
            np.asarray(cont["A"], dtype=float),
            np.asarray(cont["B"], dtype=float),
            None if cont.get("c") is None else np.asarray(cont["c"], dtype=float),
            float(doc["t_s"]),
        )
        n_u = b_d.shape[1]

        def bound(key, sign):
            value = doc.get(key)
            if value is None:
                return np.full(n_u, sign * np.inf)
            return np.array(
                [sign * np.inf if v is None else float(v) for v in value], dtype=float
            )

        step = LtvStep(a_d, b_d, c_d, bound("u_lower", -1.0), bound("u_upper", +1.0))
        return LtvSystem((step,), repeat=True)
    return system_from_json(doc)


def _parse_template(doc, n_x: int) -> ReachTemplate:
    if doc is None or doc == "default":
        return ReachTemplate.default(n_x)
    if isinstance(doc, str):
        if doc in ("box", "ellipsoid"):
            return ReachTemplate(kind=doc)
        if doc == "polytope":
            return ReachTemplate.default(n_x)
        raise ScenarioError(f"unknown template '{doc}'")
    if not isinstance(doc, dict) or "kind" not in doc:
        raise ScenarioError("template must be a name or an object with a 'kind'")
    kind = doc["kind"]
    if kind == "default":
        return ReachTemplate.default(
            n_x, n_random=int(doc.get("n_random", 0)), seed=int(doc.get("seed", 0))
        )
    if kind == "polytope":
        if "normals" not in doc:
            return ReachTemplate.default(n_x)
        return ReachTemplate(
            kind="polytope", normals=np.asarray(doc["normals"], dtype=float)
        )
    if kind in ("box", "ellipsoid"):
        return ReachTemplate(kind=kind)
    raise ScenarioError(f"unknown template kind '{kind}'")


def _parse_avoid(doc, n_x: int, horizon: int) -> AvoidSpec:
    if not isinstance(doc, dict) or "region" not in doc:
        raise ScenarioError("each avoid entry must be an object with a 'region'")
    region = cs.set_from_json(doc["region"])
    if region.dim != n_x:
        raise ScenarioError(
            f"avoid region has dimension {region.dim}, state dimension is {n_x}"
        )
    steps = doc.get("steps")
    if steps is not None:
        steps = tuple(int(t) for t in steps)
        for t in steps:
            if not 0 <= t <= horizon:
                raise ScenarioError(f"avoid step {t} outside horizon 0..{horizon}")
    return AvoidSpec(
        region=region,
        complement=bool(doc.get("complement", False)),
        steps=steps,
        label=str(doc.get("label", "")),
    )


def _parse_options(doc) -> SolverOptions:
    if doc is None:
        return SolverOptions()
    if not isinstance(doc, dict):
        raise ScenarioError("'solver_opts' must be an object")
    allowed = {"tol_gap", "tol_feas", "max_iter", "verbose"}
    unknown = set(doc) - allowed
    if unknown:
        raise ScenarioError(f"unknown solver options: {sorted(unknown)}")
    kw = {}
    for key in ("tol_gap", "tol_feas"):
        if key in doc:
            kw[key] = float(doc[key])
    for key in ("max_iter", "verbose"):
        if key in doc:
            kw[key] = int(doc[key])
    return SolverOptions().replace(**kw)


def scenario_from_dict(data: dict, base_dir: Path, name: str = "scenario") -> Scenario:
    """Resolve a parsed scenario document against its base directory."""
    if not isinstance(data, dict):
        raise ScenarioError("scenario document must be a JSON object")
    unknown = set(data) - _KNOWN_KEYS
    if unknown:
        raise ScenarioError(f"unknown scenario fields: {sorted(unknown)}")

    system = _parse_system(_require(data, "system"))
    net_path = Path(str(_require(data, "network_path")))
    if not net_path.is_absolute():
        net_path = base_dir / net_path
    if not net_path.exists():
        raise ScenarioError(f"network file not found: {net_path}")
    network = load_network(net_path)
    try:
        loop = ClosedLoop(system, network)
    except Exception as exc:
        raise ScenarioError(f"network and plant are inconsistent: {exc}") from exc
    n_x = system.n_x

    x0 = cs.set_from_json(_require(data, "x0"))
    if x0.dim != n_x:
        raise ScenarioError(
            f"initial set has dimension {x0.dim}, state dimension is {n_x}"
        )

    horizon = _require(data, "horizon")
    if not isinstance(horizon, int) or horizon < 1:
        raise ScenarioError(f"horizon must be an integer >= 1, got {horizon!r}")
    limit = system.horizon_limit()
    if limit is not None and horizon > limit:
        raise ScenarioError(f"horizon {horizon} exceeds the {limit} stored steps")

    template = _parse_template(data.get("template"), n_x)
    if template.kind == "polytope" and template.normals.shape[1] != n_x:
        raise ScenarioError(
            f"template normals have {template.normals.shape[1]} columns, "
            f"state dimension is {n_x}"
        )

    goal = None
    if data.get("goal") is not None:
        goal = cs.set_from_json(data["goal"])
        if goal.dim != n_x:
            raise ScenarioError(
                f"goal has dimension {goal.dim}, state dimension is {n_x}"
            )

    avoid_doc = data.get("avoid", [])
    if not isinstance(avoid_doc, list):
        raise ScenarioError("'avoid' must be an array")
    avoids = tuple(_parse_avoid(rec, n_x, horizon) for rec in avoid_doc)

    mode = data.get("mode", "recursive")
    if mode not in ("recursive", "batch"):
        raise ScenarioError(f"mode must be 'recursive' or 'batch', got {mode!r}")

    multiplier_mode = data.get("multiplier_mode", "full")
    if multiplier_mode not in ("full", "diag"):
        raise ScenarioError(
            f"multiplier_mode must be 'full' or 'diag', got {multiplier_mode!r}"
        )

    fals = data.get("falsification") or {}
    if not isinstance(fals, dict):
        raise ScenarioError("'falsification' must be an object")
    samples = int(fals.get("samples", 10000))
    seed = int(fals.get("seed", 0))
    if samples < 1:
        raise ScenarioError("falsification samples must be >= 1")

    proj_doc = data.get("projections")
    if proj_doc is None:
        projections = (((0, 1),) if n_x >= 2 else ())
    else:
        projections = []
        for pair in proj_doc:
            i, j = (int(v) for v in pair)
            if not (0 <= i < n_x and 0 <= j < n_x and i != j):
                raise ScenarioError(f"projection pair {pair} invalid for dimension {n_x}")
            projections.append((i, j))
        projections = tuple(projections)

    return Scenario(
        name=str(data.get("name", name)),
        loop=loop,
        initial_set=x0,
        horizon=horizon,
        template=template,
        goal=goal,
        avoids=avoids,
        multiplier_mode=multiplier_mode,
        options=_parse_options(data.get("solver_opts")),
        falsify_samples=samples,
        seed=seed,
        projections=projections,
        mode=mode,
    )


def load_scenario(path) -> Scenario:
    """Load and resolve a scenario JSON file."""
    path = Path(path)
    try:
        with open(path) as fh:
            data = json.load(fh)
    except OSError as exc:
        raise ScenarioError(f"cannot read scenario file: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ScenarioError(f"scenario file is not valid JSON: {exc}") from exc
    return scenario_from_dict(data, path.parent, name=path.stem)
