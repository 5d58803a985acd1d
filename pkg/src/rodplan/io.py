"""
Scenario files, solution files and trajectory exports.

Scenario files are YAML documents; every key is checked against a fixed schema
and all problems are reported together. Solutions are JSON with floats written
by ``repr`` so that control nets reload bit-exactly.

Scenario schema (units in brackets)::

    name: str
    rod:
      s_f: float            [m]
      order: [m, n]
    time:
      t_f: float | [min, max]   [s]
      guess: float              [s]
    bounds:
      nu_min, nu_max: float     [-]
      mu_max: float             [rad per unit s]
      v_max: float              [m/s]
      omega_max: float          [rad/s]
    formations:
      initial: <formation>
      final: <formation>
    obstacles: list of {type: sphere, center, radius} | {type: polytope, vertices}
    constraints:
      epsilon: float [m]; rest_start, rest_end, final_hard: bool
      obstacle_depth: int; collocation: [N_s, N_t]
    cost:
      mode: leader; time_weight: float [1/s]
    agents:
      count: int; samples: int
    solver: any SolverOptions field

A formation is ``{type: line, start, direction, attitude}``,
``{type: ellipse, center, semi_axes, axis1, axis2, param_range, attitude}``,
``{type: helix, radius, pitch, slope, origin, axis, phase, arc, attitude}`` or
``{type: points, samples, attitude}``. Scalars may be written as arithmetic
in ``pi`` such as ``pi/2``.
"""

from __future__ import annotations

import ast
import csv
import dataclasses
import json
import math
import operator
from importlib import resources
from pathlib import Path

import numpy as np
import yaml

from . import bernstein as bz
from . import cosserat as cs
from .errors import ValidationError
from .geometry import ConvexPolytope, SphereObstacle
from .scenario import Bounds, Ellipse, Helix, Line, SampledCurve, Scenario
from .solver import SolverOptions

SOLUTION_FORMAT = "rodplan-solution"
CONVENTION = {
    "euler": "intrinsic Z-Y-X, R = Rz(psi) Ry(theta) Rx(phi), angles (phi, theta, psi) in rad",
    "frames": "r in world frame; l, h, v, omega in body frame",
    "net_index": "fields[name][i][j][k]: s-degree index i, t-degree index j, component k",
    "basis": "tensor Bernstein basis on [0, s_f] x [0, t_f]",
}
CSV_COLUMNS = ("agent", "s", "t", "x", "y", "z", "roll", "pitch", "yaw",
               "vx", "vy", "vz", "omega_x", "omega_y", "omega_z")

_SCHEMA = {
    "name": None,
    "rod": {"s_f": None, "order": None},
    "time": {"t_f": None, "guess": None},
    "bounds": {f.name: None for f in dataclasses.fields(Bounds)},
    "formations": {"initial": "formation", "final": "formation"},
    "obstacles": "obstacles",
    "constraints": {"epsilon": None, "rest_start": None, "rest_end": None, "final_hard": None,
                    "obstacle_depth": None, "collocation": None},
    "cost": {"mode": None, "time_weight": None},
    "agents": {"count": None, "samples": None},
    "solver": {f.name: None for f in dataclasses.fields(SolverOptions)},
}
_FORMATION_KEYS = {
    "line": {"type", "start", "direction", "attitude"},
    "ellipse": {"type", "center", "semi_axes", "axis1", "axis2", "param_range", "attitude"},
    "helix": {"type", "radius", "pitch", "slope", "origin", "axis", "phase", "arc", "attitude"},
    "points": {"type", "samples", "attitude"},
}
_OBSTACLE_KEYS = {"sphere": {"type", "center", "radius"}, "polytope": {"type", "vertices"}}

_OPS = {ast.Add: operator.add, ast.Sub: operator.sub, ast.Mult: operator.mul, ast.Div: operator.truediv,
        ast.Pow: operator.pow, ast.USub: operator.neg, ast.UAdd: operator.pos}


def number(value) -> float:
    """Float from a YAML scalar; strings may use + - * / ** and the name ``pi``."""
    if isinstance(value, bool):
        raise ValueError(f"expected a number, got {value!r}")
    if isinstance(value, (int, float)):
        return float(value)
    if not isinstance(value, str):
        raise ValueError(f"expected a number, got {value!r}")

    def ev(node):
        if isinstance(node, ast.Expression):
            return ev(node.body)
        if isinstance(node, ast.Constant) and isinstance(node.value, (int, float)):
            return float(node.value)
        if isinstance(node, ast.Name) and node.id == "pi":
            return math.pi
        if isinstance(node, ast.BinOp) and type(node.op) in _OPS:
            return _OPS[type(node.op)](ev(node.left), ev(node.right))
        if isinstance(node, ast.UnaryOp) and type(node.op) in _OPS:
            return _OPS[type(node.op)](ev(node.operand))
        raise ValueError(f"unsupported expression {value!r}")

    return ev(ast.parse(value, mode="eval"))


def vector(value, size=None) -> tuple:
    if not isinstance(value, (list, tuple)):
        raise ValueError(f"expected a list, got {value!r}")
    out = tuple(number(v) for v in value)
    if size is not None and len(out) != size:
        raise ValueError(f"expected {size} entries, got {len(out)}")
    return out


def _check_keys(doc, schema, path, errors):
    if not isinstance(doc, dict):
        errors.append(f"{path or '<root>'}: expected a mapping")
        return
    for key, value in doc.items():
        where = f"{path}.{key}" if path else str(key)
        if key not in schema:
            errors.append(f"{where}: unknown key")
            continue
        sub = schema[key]
        if isinstance(sub, dict):
            _check_keys(value, sub, where, errors)
        elif sub == "formation":
            _check_formation(value, where, errors)
        elif sub == "obstacles":
            if not isinstance(value, list):
                errors.append(f"{where}: expected a list")
                continue
            for k, obs in enumerate(value):
                _check_tagged(obs, _OBSTACLE_KEYS, f"{where}[{k}]", errors)


def _check_tagged(doc, table, where, errors):
    if not isinstance(doc, dict):
        errors.append(f"{where}: expected a mapping")
        return
    kind = doc.get("type")
    if kind not in table:
        errors.append(f"{where}.type: must be one of {sorted(table)}, got {kind!r}")
        return
    for key in doc:
        if key not in table[kind]:
            errors.append(f"{where}.{key}: unknown key for type {kind}")


def _check_formation(doc, where, errors):
    if doc is None:
        return
    _check_tagged(doc, _FORMATION_KEYS, where, errors)


def _formation(doc):
    if doc is None:
        return None
    kind = doc["type"]
    att = vector(doc.get("attitude", (0, 0, 0)), 3)
    if kind == "line":
        return Line(vector(doc.get("start", (0, 0, 0)), 3), vector(doc.get("direction", (0, 0, 1)), 3), att)
    if kind == "ellipse":
        return Ellipse(vector(doc["center"], 3), vector(doc["semi_axes"], 2), vector(doc["axis1"], 3),
                       vector(doc["axis2"], 3), vector(doc.get("param_range", (0, "pi/2")), 2), att)
    if kind == "helix":
        opt = {k: number(doc[k]) for k in ("slope", "phase", "arc") if doc.get(k) is not None}
        return Helix(number(doc["radius"]), number(doc["pitch"]), origin=vector(doc.get("origin", (0, 0, 0)), 3),
                     axis=vector(doc.get("axis", (0, 0, 1)), 3), attitude=att, **opt)
    return SampledCurve(tuple(vector(p, 3) for p in doc["samples"]), att)


def _obstacle(doc):
    if doc["type"] == "sphere":
        return SphereObstacle(np.array(vector(doc["center"], 3)), number(doc["radius"]))
    return ConvexPolytope(np.array([vector(p, 3) for p in doc["vertices"]]))


@dataclasses.dataclass
class ScenarioFile:
    """Parsed scenario document: the planning scenario plus run settings."""

    scenario: Scenario
    solver: SolverOptions
    samples: int = 100
    source: str = ""


def parse_scenario(doc: dict, source: str = "") -> ScenarioFile:
    errors = []
    _check_keys(doc, _SCHEMA, "", errors)
    if errors:
        raise ValidationError(errors)
    for key in ("name", "formations"):
        if key not in doc:
            errors.append(f"{key}: required")
    if "formations" in doc and "initial" not in doc["formations"]:
        errors.append("formations.initial: required")
    if errors:
        raise ValidationError(errors)

    kw = {"name": str(doc["name"])}
    try:
        rod = doc.get("rod", {})
        if "s_f" in rod:
            kw["s_f"] = number(rod["s_f"])
        if "order" in rod:
            kw["m"], kw["n"] = (int(v) for v in rod["order"])
        time = doc.get("time", {})
        if "t_f" in time:
            t_f = time["t_f"]
            kw["t_f"] = vector(t_f, 2) if isinstance(t_f, list) else number(t_f)
        if "guess" in time:
            kw["t_f_guess"] = number(time["guess"])
        kw["bounds"] = Bounds(**{k: number(v) for k, v in doc.get("bounds", {}).items()})
        forms = doc["formations"]
        kw["initial_formation"] = _formation(forms["initial"])
        kw["final_formation"] = _formation(forms.get("final"))
        kw["obstacles"] = [_obstacle(o) for o in doc.get("obstacles", []) or []]
        cons = doc.get("constraints", {})
        if "epsilon" in cons:
            kw["epsilon"] = number(cons["epsilon"])
        for flag in ("rest_start", "rest_end", "final_hard"):
            if flag in cons:
                kw[flag] = bool(cons[flag])
        if "obstacle_depth" in cons:
            kw["obstacle_depth"] = int(cons["obstacle_depth"])
        if cons.get("collocation") is not None:
            kw["collocation"] = tuple(int(v) for v in cons["collocation"])
        cost = doc.get("cost", {})
        if "mode" in cost:
            kw["cost"] = str(cost["mode"])
        if "time_weight" in cost:
            kw["time_weight"] = number(cost["time_weight"])
        agents = doc.get("agents", {})
        if "count" in agents:
            kw["n_v"] = int(agents["count"])
        samples = int(agents.get("samples", 100))
        solver = SolverOptions(**doc.get("solver", {}))
    except (ValueError, TypeError, KeyError) as exc:
        raise ValidationError([f"{type(exc).__name__}: {exc}"]) from exc
    sc = Scenario(**kw)
    sc.validate()
    return ScenarioFile(sc, solver, samples, source)


def bundled_scenarios() -> list:
    root = resources.files("rodplan") / "scenarios"
    return sorted(p.name[:-5] for p in root.iterdir() if p.name.endswith(".yaml"))


def resolve_scenario_path(name_or_path) -> Path:
    path = Path(name_or_path)
    if path.exists():
        return path
    if str(name_or_path) in bundled_scenarios():
        return Path(str(resources.files("rodplan") / "scenarios" / f"{name_or_path}.yaml"))
    raise FileNotFoundError(f"no scenario file or bundled scenario named {name_or_path!r}")


def load_scenario(name_or_path) -> ScenarioFile:
    path = resolve_scenario_path(name_or_path)
    with open(path) as fh:
        doc = yaml.safe_load(fh)
    return parse_scenario(doc or {}, str(path))


# ------------------------------------------------------------------ solution


def solution_document(fields: cs.RodFields, scenario_name: str = "", extra: dict | None = None) -> dict:
    doc = {
        "format": SOLUTION_FORMAT,
        "version": 1,
        "scenario": scenario_name,
        "convention": CONVENTION,
        "degrees": {"m": fields.m, "n": fields.n},
        "domain": {"s_f": fields.s_f, "t_f": fields.t_f},
        "fields": {name: getattr(fields, name).net.tolist() for name in ("r", "euler", "l", "h", "v", "omega")},
    }
    if extra:
        doc.update(extra)
    return doc


def save_solution(path, fields: cs.RodFields, scenario_name: str = "", extra: dict | None = None) -> None:
    with open(path, "w") as fh:
        json.dump(solution_document(fields, scenario_name, extra), fh, indent=1)


def load_solution(path) -> cs.RodFields:
    with open(path) as fh:
        doc = json.load(fh)
    if doc.get("format") != SOLUTION_FORMAT:
        raise ValidationError([f"{path}: not a {SOLUTION_FORMAT} file"])
    m, n = doc["degrees"]["m"], doc["degrees"]["n"]
    s_f, t_f = float(doc["domain"]["s_f"]), float(doc["domain"]["t_f"])
    nets = []
    for name in ("r", "euler", "l", "h", "v", "omega"):
        net = np.array(doc["fields"][name], dtype=float)
        if net.shape != (m + 1, n + 1, 3):
            raise ValidationError([f"fields.{name}: shape {net.shape}, expected {(m + 1, n + 1, 3)}"])
        nets.append(net)
    return cs.RodFields.from_nets(nets, s_f, t_f)


# ------------------------------------------------------------------ exports


def write_agents_csv(path, traj) -> None:
    """One row per (agent, t), agents ordered by s and times ascending."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(CSV_COLUMNS)
        for i, s in enumerate(traj.s):
            for j, t in enumerate(traj.t):
                w.writerow([i + 1, repr(float(s)), repr(float(t)),
                            *(repr(float(v)) for v in traj.r[i, j]), *(repr(float(v)) for v in traj.euler[i, j]),
                            *(repr(float(v)) for v in traj.v[i, j]), *(repr(float(v)) for v in traj.omega[i, j])])


def read_agents_csv(path) -> np.ndarray:
    return np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)


def norm_grids(fields: cs.RodFields, n_s: int = 200, n_t: int = 200) -> dict:
    """Squared norms of l, h, v, omega sampled on a uniform (s, t) grid."""
    s = np.linspace(0.0, fields.s_f, n_s)
    t = np.linspace(0.0, fields.t_f, n_t)
    out = {"s": s, "t": t}
    for name in ("l", "h", "v", "omega"):
        vals = bz.eval_grid(getattr(fields, name), s, t)
        out[name] = np.sum(vals**2, axis=-1)
    return out
