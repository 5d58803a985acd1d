"""
Command line entry point: ``rodplan solve | verify | plotdata | extract``.

``verify`` is independent of the solver. It reads only a solution file and a
scenario and re-checks the kinematics on a grid with four times the
collocation nodes, the strain/velocity limits on the control coefficients and
on a dense sample grid, obstacle clearance at high subdivision depth, and the
boundary formations at the edge nodes.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
import time
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from . import bernstein as bz
from . import cosserat as cs
from . import geometry as geo
from . import io
from . import solver as slv
from . import transcription as tr
from .errors import SingularityError, ValidationError

log = logging.getLogger("rodplan")

DYNAMICS_TOL = 1e-5
BOUND_TOL = 1e-6
BOUNDARY_TOL = 1e-3
VERIFY_DEPTH = 10
SAMPLE_GRID = 200


@dataclass
class Check:
    name: str
    worst: float
    limit: float
    passed: bool
    where: str = ""

    def line(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        loc = f" at {self.where}" if self.where else ""
        return f"{status} {self.name}: worst {self.worst:.3e} (limit {self.limit:.3e}){loc}"


@dataclass
class VerifyReport:
    checks: list = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)

    def add(self, name, worst, limit, where=""):
        self.checks.append(Check(name, float(worst), float(limit), bool(worst <= limit), where))

    def as_dict(self) -> dict:
        return {"passed": self.passed, "checks": [c.__dict__ for c in self.checks]}


def _fmt_node(s, t):
    return f"(s={s:.4g}, t={t:.4g})"


def verify_solution(fields: cs.RodFields, scenario, dynamics_tol=DYNAMICS_TOL, bound_tol=BOUND_TOL,
                    boundary_tol=BOUNDARY_TOL, depth=VERIFY_DEPTH, n_samples=SAMPLE_GRID) -> VerifyReport:
    """Check a solution against a scenario without any solver state."""
    rep = VerifyReport()
    sc = scenario
    if (fields.m, fields.n) != (sc.m, sc.n) or abs(fields.s_f - sc.s_f) > 1e-12:
        rep.add("layout matches scenario", 1.0, 0.0, f"solution ({fields.m}, {fields.n}, s_f={fields.s_f})")
        return rep

    lo, hi = sc.t_f_range
    rep.add("t_f within range", max(0.0, lo - fields.t_f, fields.t_f - hi), 1e-12, f"t_f={fields.t_f:.6g}")

    # kinematics on a refined grid
    n_s, n_t = sc.collocation if sc.collocation else (2 * sc.m + 1, 2 * sc.n + 1)
    grid = cs.CollocationGrid.uniform(sc.m, sc.n, fields.s_f, fields.t_f, 4 * n_s, 4 * n_t)
    try:
        res = cs.kinematic_residuals(fields, grid).reshape(len(grid.s_nodes), len(grid.t_nodes), 12)
        i, j, k = np.unravel_index(np.argmax(np.abs(res)), res.shape)
        rep.add("dynamics residual (4x grid)", abs(res[i, j, k]), dynamics_tol,
                f"{_fmt_node(grid.s_nodes[i], grid.t_nodes[j])} equation {k}")
    except SingularityError as exc:
        rep.add("dynamics residual (4x grid)", np.inf, dynamics_tol, f"gimbal lock {exc.node}")

    # limits on coefficients and on a dense grid
    b = sc.bounds
    s = np.linspace(0.0, fields.s_f, n_samples)
    t = np.linspace(0.0, fields.t_f, n_samples)
    limits = (("l", b.nu_min, b.nu_max), ("h", None, b.mu_max), ("v", None, b.v_max), ("omega", None, b.omega_max))
    for name, low, high in limits:
        coeffs = bz.norm_sq(getattr(fields, name)).net
        over = coeffs - high**2
        if low is not None:
            over = np.maximum(over, low**2 - coeffs)
        i, j = np.unravel_index(np.argmax(over), over.shape)
        rep.add(f"{name} coefficient bounds", max(0.0, over[i, j]), bound_tol, f"coefficient ({i}, {j})")
        norms = np.linalg.norm(bz.eval_grid(getattr(fields, name), s, t), axis=-1)
        over = norms - high
        if low is not None:
            over = np.maximum(over, low - norms)
        i, j = np.unravel_index(np.argmax(over), over.shape)
        rep.add(f"{name} sampled bounds", max(0.0, over[i, j]), bound_tol, _fmt_node(s[i], t[j]))

    # obstacles
    q = geo.ClearanceQuery(sc.epsilon, depth)
    for k, obs in enumerate(sc.obstacles):
        cb = geo.surface_min_distance(fields.r, obs, q)
        rep.add(f"obstacle {k} clearance", max(0.0, sc.epsilon - cb.lower), bound_tol,
                f"lower bound {cb.lower:.6g}, epsilon {sc.epsilon:g}, depth {depth}")

    # boundary formations at the m+1 edge nodes
    s_nodes = np.linspace(0.0, fields.s_f, sc.m + 1)
    ends = [("initial", 0.0, sc.initial_formation, sc.rest_start)]
    if sc.final_formation is not None and sc.final_hard:
        ends.append(("final", fields.t_f, sc.final_formation, sc.rest_end))
    elif sc.rest_end:
        ends.append(("final", fields.t_f, None, True))
    for label, t_edge, form, rest in ends:
        tt = np.array([t_edge])
        if form is not None:
            dev = np.linalg.norm(bz.eval_grid(fields.r, s_nodes, tt)[:, 0] - form.positions(s_nodes, fields.s_f), axis=1)
            i = int(np.argmax(dev))
            rep.add(f"{label} formation position", dev[i], boundary_tol, f"s={s_nodes[i]:.4g}")
            att = np.abs(bz.eval_grid(fields.euler, s_nodes, tt)[:, 0] - np.asarray(form.attitude)).max(axis=1)
            i = int(np.argmax(att))
            rep.add(f"{label} formation attitude", att[i], boundary_tol, f"s={s_nodes[i]:.4g}")
        if rest:
            speed = np.maximum(np.linalg.norm(bz.eval_grid(fields.v, s_nodes, tt)[:, 0], axis=1),
                               np.linalg.norm(bz.eval_grid(fields.omega, s_nodes, tt)[:, 0], axis=1))
            i = int(np.argmax(speed))
            rep.add(f"{label} rest", speed[i], boundary_tol, f"s={s_nodes[i]:.4g}")
    return rep


# ------------------------------------------------------------------ commands


def _apply_overrides(sf: io.ScenarioFile, args) -> io.ScenarioFile:
    sc, opts = sf.scenario, sf.solver
    if getattr(args, "order", None):
        sc = replace(sc, m=args.order[0], n=args.order[1])
    if getattr(args, "agents", None):
        sc = replace(sc, n_v=args.agents)
    if getattr(args, "tol", None):
        opts = replace(opts, eq_tol=args.tol, ineq_tol=args.tol)
    if getattr(args, "seed", None) is not None:
        opts = replace(opts, seed=args.seed)
    sc.validate()
    samples = args.samples if getattr(args, "samples", None) else sf.samples
    return io.ScenarioFile(sc, opts, samples, sf.source)


def _export_agents(fields, n_v, samples, path):
    t = np.linspace(0.0, fields.t_f, samples)
    traj = tr.extract_agents(fields, n_v, t)
    io.write_agents_csv(path, traj)
    return traj


def solve_command(scenario_path, output_dir, args=None) -> int:
    args = args or argparse.Namespace()
    try:
        sf = _apply_overrides(io.load_scenario(scenario_path), args)
    except ValidationError as exc:
        print("scenario invalid:", file=sys.stderr)
        for err in exc.errors:
            print(f"  {err}", file=sys.stderr)
        return 2
    sc = sf.scenario
    out = Path(output_dir)
    out.mkdir(parents=True, exist_ok=True)
    problem = tr.assemble(sc)
    log.info("solving %s: %d variables, %d equalities, %d inequalities",
             sc.name, problem.x0.size, problem.n_eq, problem.n_ineq)
    x, report = slv.minimize(problem, sf.solver)
    fields, _ = tr.unpack(x, problem.layout, sc.s_f)
    sol_path = out / "solution.json"
    io.save_solution(sol_path, fields, sc.name)

    t0 = time.perf_counter()
    _export_agents(io.load_solution(sol_path), sc.n_v, sf.samples, out / "agents.csv")
    extract_time = time.perf_counter() - t0

    depth = getattr(args, "max_depth", None) or VERIFY_DEPTH
    ver = verify_solution(io.load_solution(sol_path), sc, depth=depth)
    summary = {
        "scenario": sc.name,
        "source": sf.source,
        "orders": [sc.m, sc.n],
        "variables": int(problem.x0.size),
        "solver": report.as_dict(),
        "solver_options": sf.solver.__dict__,
        "t_f": fields.t_f,
        "agents": sc.n_v,
        "extract_time": extract_time,
        "verification": ver.as_dict(),
    }
    with open(out / "summary.json", "w") as fh:
        json.dump(summary, fh, indent=1, default=float)
    print(f"{sc.name}: cost {report.cost:.6g}, eq {report.max_eq_violation:.2e}, "
          f"ineq {report.max_ineq_violation:.2e}, t_f {fields.t_f:.4g} s, "
          f"{report.termination}, {report.wall_time:.1f} s")
    for c in ver.checks:
        print("  " + c.line())
    print("verified feasible" if ver.passed else "verification FAILED")
    return 0 if ver.passed else 1


def verify_command(solution_path, scenario_path, args=None) -> int:
    args = args or argparse.Namespace()
    try:
        sf = _apply_overrides(io.load_scenario(scenario_path), argparse.Namespace(order=getattr(args, "order", None)))
        fields = io.load_solution(solution_path)
    except ValidationError as exc:
        for err in exc.errors:
            print(f"  {err}", file=sys.stderr)
        return 2
    rep = verify_solution(fields, sf.scenario, dynamics_tol=getattr(args, "tol", None) or DYNAMICS_TOL,
                          depth=getattr(args, "max_depth", None) or VERIFY_DEPTH)
    for c in rep.checks:
        print(c.line())
    print("verified feasible" if rep.passed else "verification FAILED")
    return 0 if rep.passed else 1


def plotdata_command(solution_path, output_dir, args=None) -> list:
    """Write norm grids, bound planes and agent polylines as CSV/JSON files."""
    args = args or argparse.Namespace()
    fields = io.load_solution(solution_path)
    out = Path(output_dir)
    out.mkdir(parents=True, exist_ok=True)
    n = getattr(args, "grid", None) or SAMPLE_GRID
    grids = io.norm_grids(fields, n, n)
    surf = out / "norm_grids.csv"
    with open(surf, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["s", "t", "l_sq", "h_sq", "v_sq", "omega_sq"])
        for i, s in enumerate(grids["s"]):
            for j, t in enumerate(grids["t"]):
                w.writerow([repr(float(s)), repr(float(t)), *(repr(float(grids[k][i, j])) for k in ("l", "h", "v", "omega"))])
    files = [surf]
    scenario = getattr(args, "scenario", None)
    if scenario:
        b = io.load_scenario(scenario).scenario.bounds
        planes = {"l_sq": [b.nu_min**2, b.nu_max**2], "h_sq": [None, b.mu_max**2],
                  "v_sq": [None, b.v_max**2], "omega_sq": [None, b.omega_max**2]}
        path = out / "bound_planes.json"
        with open(path, "w") as fh:
            json.dump(planes, fh, indent=1)
        files.append(path)
    n_v = getattr(args, "agents", None) or 10
    path = out / "agent_paths.csv"
    _export_agents(fields, n_v, getattr(args, "samples", None) or 100, path)
    files.append(path)
    for f in files:
        print(f)
    return files


def extract_command(solution_path, output_dir, args=None) -> Path:
    args = args or argparse.Namespace()
    fields = io.load_solution(solution_path)
    out = Path(output_dir)
    out.mkdir(parents=True, exist_ok=True)
    n_v = getattr(args, "agents", None) or 10
    path = out / f"agents_{n_v}.csv"
    t0 = time.perf_counter()
    _export_agents(fields, n_v, getattr(args, "samples", None) or 100, path)
    print(f"{path} ({n_v} agents, {time.perf_counter() - t0:.3f} s)")
    return path


# ------------------------------------------------------------------ parser


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="rodplan", description="Formation planning on Bernstein-surface rods.")
    p.add_argument("-v", "--verbose", action="store_true", help="log solver progress")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, agents=True):
        if agents:
            sp.add_argument("--agents", type=int, metavar="N", help="number of agents to extract")
            sp.add_argument("--samples", type=int, metavar="K", help="time samples per agent (default 100)")
        sp.add_argument("--output", metavar="DIR", default=".", help="output directory")

    sp = sub.add_parser("solve", help="solve a scenario and verify the result")
    sp.add_argument("scenario", help=f"scenario file or bundled name ({', '.join(io.bundled_scenarios())})")
    sp.add_argument("--order", type=int, nargs=2, metavar=("M", "N"), help="surface degrees in s and t")
    sp.add_argument("--max-depth", type=int, metavar="D", help="subdivision depth for the clearance check")
    sp.add_argument("--tol", type=float, metavar="EPS", help="solver feasibility tolerance")
    sp.add_argument("--seed", type=int, metavar="S", help="seed recorded with the run")
    common(sp)

    sp = sub.add_parser("verify", help="independently check a solution file against a scenario")
    sp.add_argument("solution")
    sp.add_argument("scenario")
    sp.add_argument("--order", type=int, nargs=2, metavar=("M", "N"), help="degrees the solution was solved at")
    sp.add_argument("--max-depth", type=int, metavar="D", help="subdivision depth (default 10)")
    sp.add_argument("--tol", type=float, metavar="EPS", help="dynamics residual tolerance (default 1e-5)")

    sp = sub.add_parser("plotdata", help="write gridded norms and agent paths for plotting")
    sp.add_argument("solution")
    sp.add_argument("--scenario", help="scenario whose bound planes are written")
    sp.add_argument("--grid", type=int, metavar="G", help="samples per axis (default 200)")
    common(sp)

    sp = sub.add_parser("extract", help="resample agent trajectories from a solution")
    sp.add_argument("solution")
    common(sp)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    if args.command == "solve":
        return solve_command(args.scenario, args.output, args)
    if args.command == "verify":
        return verify_command(args.solution, args.scenario, args)
    if args.command == "plotdata":
        plotdata_command(args.solution, args.output, args)
        return 0
    extract_command(args.solution, args.output, args)
    return 0


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
