"""
Transcription of the formation planning problem into a finite NLP.

Decision vector layout (all nets flattened row-major over (i, j)):

    r_x r_y r_z | phi theta psi | l(3) | h(3) | v(3) | omega(3) | t_f

Equality constraints: kinematic residuals at the collocation nodes, then the
boundary block. Inequality constraints (<= 0): coefficient bounds on the
norm-squared strain/velocity surfaces, then one clearance row per obstacle.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from . import bernstein as bz
from . import cosserat as cs
from . import geometry as geo
from .errors import ShapeError
from .scenario import Scenario

FIELD_NAMES = ("r", "euler", "l", "h", "v", "omega")
N_SCALAR_NETS = 18


@dataclass(frozen=True)
class Layout:
    m: int
    n: int

    @property
    def net_size(self) -> int:
        return (self.m + 1) * (self.n + 1)

    @property
    def size(self) -> int:
        return N_SCALAR_NETS * self.net_size + 1

    @property
    def t_f_index(self) -> int:
        return self.size - 1

    def field_slice(self, name: str) -> slice:
        k = FIELD_NAMES.index(name)
        return slice(3 * k * self.net_size, 3 * (k + 1) * self.net_size)

    def component_slice(self, name: str, comp: int) -> slice:
        start = (3 * FIELD_NAMES.index(name) + comp) * self.net_size
        return slice(start, start + self.net_size)

    def net_index(self, name: str, comp: int, i: int, j: int) -> int:
        return (3 * FIELD_NAMES.index(name) + comp) * self.net_size + i * (self.n + 1) + j


def pack(fields: cs.RodFields, t_f: float) -> np.ndarray:
    """Flatten the six field nets and t_f into one decision vector."""
    return np.concatenate([cs.stack_nets(fields).ravel(), [float(t_f)]])


def unpack(x, layout: Layout, s_f: float):
    """Inverse of :func:`pack`; returns (RodFields, t_f)."""
    x = np.asarray(x, dtype=float)
    if x.shape != (layout.size,):
        raise ShapeError(f"decision vector has length {x.size}, layout expects {layout.size}")
    t_f = float(x[-1])
    X = x[:-1].reshape(N_SCALAR_NETS, layout.m + 1, layout.n + 1)
    nets = [np.moveaxis(X[3 * k:3 * k + 3], 0, -1) for k in range(6)]
    return cs.RodFields.from_nets(nets, s_f, t_f), t_f


def _curve_gram(n: int) -> np.ndarray:
    """M with integral over [0, T] of (sum c_q B_q^n)^2 = T / (2n+1) * c^T M c."""
    M = np.empty((n + 1, n + 1))
    for q in range(n + 1):
        for k in range(n + 1):
            M[q, k] = bz.binomial(n, q) * bz.binomial(n, k) / bz.binomial(2 * n, q + k)
    return M


@dataclass
class CostSpec:
    """Leader-tracking targets (poses of the s=0 and s=s_f agents) or a running cost.

    ``running_cost(r, R, l, h, v, omega)`` receives per-control-point arrays of
    shape (N, 3) (R: (N, 3, 3)) and returns N values.
    """

    mode: str = "leader"
    r_first: np.ndarray = field(default_factory=lambda: np.zeros(3))
    att_first: np.ndarray = field(default_factory=lambda: np.zeros(3))
    r_last: np.ndarray = field(default_factory=lambda: np.zeros(3))
    att_last: np.ndarray = field(default_factory=lambda: np.zeros(3))
    running_cost: Optional[Callable] = None
    time_weight: float = 0.0


def build_cost(spec: CostSpec, fields: cs.RodFields, t_f: float) -> float:
    """Objective value for given fields (reference implementation on surfaces)."""
    if spec.mode == "leader":
        total = 0.0
        for surf, which, target in (
            (fields.r, "s=0", spec.r_first), (fields.euler, "s=0", spec.att_first),
            (fields.r, "s=s_f", spec.r_last), (fields.euler, "s=s_f", spec.att_last),
        ):
            e = bz.edge(surf, which)
            dev = bz.BernsteinSurface((e.coeffs - np.asarray(target))[None, :, :], 1.0, t_f)
            total += bz.integrate(bz.norm_sq(dev))
        return total + spec.time_weight * t_f
    R = cs.rotation_from_euler(*np.moveaxis(fields.euler.net.reshape(-1, 3), -1, 0))
    vals = spec.running_cost(
        fields.r.net.reshape(-1, 3), R, fields.l.net.reshape(-1, 3), fields.h.net.reshape(-1, 3),
        fields.v.net.reshape(-1, 3), fields.omega.net.reshape(-1, 3),
    ).reshape(fields.m + 1, fields.n + 1)
    ws, wt = bz.quadrature_weights(fields.r)
    return float(ws @ vals @ wt) + spec.time_weight * t_f


def build_bound_constraints(fields: cs.RodFields, bounds) -> np.ndarray:
    """Per-coefficient inequalities (<= 0) on |l|^2, |h|^2, |v|^2, |omega|^2 at degree (2m, 2n)."""
    nl, nh, nv, nw = (bz.norm_sq(f).net.ravel() for f in (fields.l, fields.h, fields.v, fields.omega))
    return np.concatenate([
        bounds.nu_min**2 - nl, nl - bounds.nu_max**2,
        nh - bounds.mu_max**2, nv - bounds.v_max**2, nw - bounds.omega_max**2,
    ])


def build_dynamics_constraints(fields: cs.RodFields, grid: cs.CollocationGrid) -> np.ndarray:
    return cs.kinematic_residuals(fields, grid)


@dataclass
class BoundaryConditions:
    """Edge targets as Bernstein coefficients along s (shape (m+1, 3) each).

    Any entry left as None is not constrained.
    """

    r0: Optional[np.ndarray] = None
    euler0: Optional[np.ndarray] = None
    v0: Optional[np.ndarray] = None
    omega0: Optional[np.ndarray] = None
    r1: Optional[np.ndarray] = None
    euler1: Optional[np.ndarray] = None
    v1: Optional[np.ndarray] = None
    omega1: Optional[np.ndarray] = None

    def items(self):
        for key, name, col in (
            ("r0", "r", 0), ("euler0", "euler", 0), ("v0", "v", 0), ("omega0", "omega", 0),
            ("r1", "r", -1), ("euler1", "euler", -1), ("v1", "v", -1), ("omega1", "omega", -1),
        ):
            target = getattr(self, key)
            if target is not None:
                yield key, name, col, np.asarray(target, dtype=float)


def build_boundary_constraints(fields: cs.RodFields, bc: BoundaryConditions) -> np.ndarray:
    """Edge control points minus target coefficients (t=0 column, t=t_f column)."""
    out = []
    for _, name, col, target in bc.items():
        out.append((getattr(fields, name).net[:, col, :] - target).ravel())
    return np.concatenate(out) if out else np.zeros(0)


def build_obstacle_constraints(fields: cs.RodFields, obstacles, epsilon: float, depth: int = 2) -> np.ndarray:
    """One row per obstacle: epsilon minus the hull clearance of the position surface."""
    return np.array([epsilon - geo.uniform_clearance(fields.r.net, obs, depth).value for obs in obstacles])


def boundary_conditions_for(scenario: Scenario) -> BoundaryConditions:
    m, s_f = scenario.m, scenario.s_f
    zeros = np.zeros((m + 1, 3))
    bc = BoundaryConditions(
        r0=scenario.initial_formation.bernstein_coeffs(m, s_f),
        euler0=np.tile(np.asarray(scenario.initial_formation.attitude, dtype=float), (m + 1, 1)),
    )
    if scenario.rest_start:
        bc.v0, bc.omega0 = zeros, zeros
    if scenario.final_formation is not None and scenario.final_hard:
        bc.r1 = scenario.final_formation.bernstein_coeffs(m, s_f)
        bc.euler1 = np.tile(np.asarray(scenario.final_formation.attitude, dtype=float), (m + 1, 1))
    if scenario.rest_end:
        bc.v1, bc.omega1 = zeros, zeros
    return bc


def cost_spec_for(scenario: Scenario) -> CostSpec:
    if scenario.cost == "general":
        return CostSpec("general", running_cost=scenario.running_cost, time_weight=scenario.time_weight)
    final = scenario.final_formation
    ends = final.positions([0.0, scenario.s_f], scenario.s_f)
    att = np.asarray(final.attitude, dtype=float)
    return CostSpec("leader", ends[0], att, ends[1], att.copy(), time_weight=scenario.time_weight)


@dataclass
class Block:
    name: str
    kind: str  # "eq" or "ineq"
    rows: slice


@dataclass
class NlpProblem:
    """Finite-dimensional problem: min f(x) s.t. eq(x) = 0, ineq(x) <= 0, lower <= x <= upper.

    Gradient callables are optional; the solver falls back to finite differences.
    ``lagrangian_hessian(x, w_eq, w_ineq)``, when given, returns the Hessian of
    f + w_eq @ eq + w_ineq @ ineq and enables Newton inner steps.
    """

    x0: np.ndarray
    lower: np.ndarray
    upper: np.ndarray
    objective: Callable
    eq: Callable
    ineq: Callable
    objective_grad: Optional[Callable] = None
    eq_jac: Optional[Callable] = None
    ineq_jac: Optional[Callable] = None
    lagrangian_hessian: Optional[Callable] = None
    layout: Optional[Layout] = None
    blocks: list = field(default_factory=list)
    diagnostics: Optional[Callable] = None

    @property
    def n_eq(self) -> int:
        return int(np.size(self.eq(self.x0)))

    @property
    def n_ineq(self) -> int:
        return int(np.size(self.ineq(self.x0)))

    def block_summary(self, x) -> dict:
        ce, ci = np.asarray(self.eq(x)), np.asarray(self.ineq(x))
        out = {}
        for b in self.blocks:
            vals = (ce if b.kind == "eq" else ci)[b.rows]
            if vals.size == 0:
                worst = 0.0
            elif b.kind == "eq":
                worst = float(np.abs(vals).max())
            else:
                worst = float(max(0.0, vals.max()))
            out[b.name] = {"kind": b.kind, "rows": int(vals.size), "max_violation": worst}
        return out


class Transcription:
    """Vectorized evaluators with exact Jacobians for one scenario."""

    def __init__(self, scenario: Scenario):
        scenario.validate()
        self.scenario = sc = scenario
        self.layout = Layout(sc.m, sc.n)
        m, n = sc.m, sc.n
        n_s, n_t = sc.collocation if sc.collocation else (2 * m + 1, 2 * n + 1)
        grid = cs.CollocationGrid.uniform(m, n, 1.0, 1.0, n_s, n_t)
        self.kin = cs.KinematicsOperator(m, n, sc.s_f, grid.s_nodes, grid.t_nodes)
        T = np.asarray(bz.product_tensor(m, n, m, n))
        self.sym_product = 0.5 * (T + np.swapaxes(T, 1, 2))
        self.product = T
        self.gram = _curve_gram(n)
        self.bc = boundary_conditions_for(sc)
        self.cost_spec = cost_spec_for(sc)
        self._build_boundary_matrix()
        N = self.layout.net_size
        self.n_dyn = 12 * self.kin.n_nodes
        self.n_bc = self.bc_matrix.shape[0]
        self.n_bounds = 5 * (2 * m + 1) * (2 * n + 1)
        self.n_obs = len(sc.obstacles)
        self._N = N

    # ------------------------------------------------------------ boundary

    def _build_boundary_matrix(self):
        L = self.layout
        rows, rhs = [], []
        for _, name, col, target in self.bc.items():
            j = col % (L.n + 1)
            for i in range(L.m + 1):
                for comp in range(3):
                    row = np.zeros(L.size)
                    row[L.net_index(name, comp, i, j)] = 1.0
                    rows.append(row)
                    rhs.append(target[i, comp])
        self.bc_matrix = np.array(rows).reshape(-1, L.size)
        self.bc_rhs = np.array(rhs)

    # ------------------------------------------------------------ pieces

    def nets(self, x):
        return np.asarray(x[:-1]).reshape(N_SCALAR_NETS, self._N)

    def objective(self, x):
        return self._objective(x, grad=False)

    def objective_grad(self, x):
        return self._objective(x, grad=True)[1]

    def _objective(self, x, grad):
        sc, spec, L = self.scenario, self.cost_spec, self.layout
        t_f = float(x[-1])
        g = np.zeros(L.size)
        if spec.mode == "general":
            fields, _ = unpack(x, L, sc.s_f)
            val = build_cost(spec, fields, t_f)
            if grad:
                from .solver import gradient
                g = gradient(self.objective, np.asarray(x, dtype=float), 1e-7, central=True)
                return val, g
            return val
        X = self.nets(x).reshape(N_SCALAR_NETS, L.m + 1, L.n + 1)
        w = t_f / (2 * L.n + 1)
        total = 0.0
        for base, row, target in ((0, 0, spec.r_first), (3, 0, spec.att_first),
                                  (0, L.m, spec.r_last), (3, L.m, spec.att_last)):
            for c in range(3):
                d = X[base + c, row, :] - target[c]
                Md = self.gram @ d
                q = float(d @ Md)
                total += w * q
                if grad:
                    idx = (base + c) * self._N + row * (L.n + 1)
                    g[idx:idx + L.n + 1] += 2 * w * Md
                    g[-1] += q / (2 * L.n + 1)
        val = total + spec.time_weight * t_f
        if grad:
            g[-1] += spec.time_weight
            return val, g
        return val

    def dynamics(self, x, jacobian=False):
        return self.kin.residuals(self.nets(x), float(x[-1]), jacobian=jacobian)

    def bounds_block(self, x, jacobian=False):
        b = self.scenario.bounds
        X = self.nets(x)
        groups = (slice(6, 9), slice(9, 12), slice(12, 15), slice(15, 18))
        sq = [sum(self.product @ X[k] @ X[k] for k in range(g.start, g.stop)) for g in groups]
        vals = np.concatenate([b.nu_min**2 - sq[0], sq[0] - b.nu_max**2,
                               sq[1] - b.mu_max**2, sq[2] - b.v_max**2, sq[3] - b.omega_max**2])
        if not jacobian:
            return vals
        P = sq[0].size
        J = np.zeros((5 * P, self.layout.size))
        N = self._N
        for k in range(6, 9):
            d = 2 * (self.sym_product @ X[k])
            J[0:P, k * N:(k + 1) * N] = -d
            J[P:2 * P, k * N:(k + 1) * N] = d
        for blk, g in ((2, groups[1]), (3, groups[2]), (4, groups[3])):
            for k in range(g.start, g.stop):
                J[blk * P:(blk + 1) * P, k * N:(k + 1) * N] = 2 * (self.sym_product @ X[k])
        return vals, J

    def boundary_block(self, x, jacobian=False):
        vals = self.bc_matrix @ x - self.bc_rhs
        return (vals, self.bc_matrix) if jacobian else vals

    def obstacle_block(self, x, jacobian=False):
        sc, L = self.scenario, self.layout
        r_net = np.moveaxis(self.nets(x)[0:3].reshape(3, L.m + 1, L.n + 1), 0, -1)
        vals = np.zeros(self.n_obs)
        J = np.zeros((self.n_obs, L.size))
        for k, obs in enumerate(sc.obstacles):
            pc = geo.uniform_clearance(r_net, obs, sc.obstacle_depth)
            vals[k] = sc.epsilon - pc.value
            J[k, :3 * self._N] = -np.moveaxis(pc.gradient, -1, 0).ravel()
        return (vals, J) if jacobian else vals

    def lagrangian_hessian(self, x, w_eq, w_ineq):
        """Hessian of objective + w_eq @ eq + w_ineq @ ineq (obstacle rows contribute none)."""
        L, N = self.layout, self._N
        X = self.nets(x)
        H = self.kin.lagrangian_hessian(X, float(x[-1]), w_eq[:self.n_dyn])
        P = (2 * L.m + 1) * (2 * L.n + 1)
        wb = w_ineq[:self.n_bounds].reshape(5, P)
        coefs = (wb[1] - wb[0], wb[2], wb[3], wb[4])
        for coef, start in zip(coefs, (6, 9, 12, 15)):
            blk = 2 * np.einsum("e,eij->ij", coef, self.sym_product)
            for k in range(start, start + 3):
                H[k * N:(k + 1) * N, k * N:(k + 1) * N] += blk
        spec = self.cost_spec
        t_f = float(x[-1])
        w = t_f / (2 * L.n + 1)
        X3 = X.reshape(N_SCALAR_NETS, L.m + 1, L.n + 1)
        for base, row, target in ((0, 0, spec.r_first), (3, 0, spec.att_first),
                                  (0, L.m, spec.r_last), (3, L.m, spec.att_last)):
            for c in range(3):
                idx = (base + c) * N + row * (L.n + 1)
                sl = slice(idx, idx + L.n + 1)
                H[sl, sl] += 2 * w * self.gram
                cross = 2 * self.gram @ (X3[base + c, row, :] - target[c]) / (2 * L.n + 1)
                H[sl, -1] += cross
                H[-1, sl] += cross
        return H

    # ------------------------------------------------------------ assembled

    def eq(self, x):
        return np.concatenate([self.dynamics(x), self.boundary_block(x)])

    def eq_jac(self, x):
        _, Jd = self.dynamics(x, jacobian=True)
        return np.vstack([Jd, self.bc_matrix])

    def ineq(self, x):
        return np.concatenate([self.bounds_block(x), self.obstacle_block(x)])

    def ineq_jac(self, x):
        return np.vstack([self.bounds_block(x, True)[1], self.obstacle_block(x, True)[1]])

    def initial_guess(self) -> np.ndarray:
        """Static point surface at the initial formation's midpoint, constant attitude, zero rates."""
        sc, L = self.scenario, self.layout
        mid = sc.initial_formation.positions([sc.s_f / 2], sc.s_f)[0]
        att = np.asarray(sc.initial_formation.attitude, dtype=float)
        X = np.zeros((N_SCALAR_NETS, self._N))
        X[0:3] = mid[:, None]
        X[3:6] = att[:, None]
        lo, hi = sc.t_f_range
        t_f = sc.t_f_guess if sc.t_f_guess is not None else 0.5 * (lo + hi)
        return np.concatenate([X.ravel(), [t_f]])

    def problem(self) -> NlpProblem:
        L = self.layout
        lower = np.full(L.size, -np.inf)
        upper = np.full(L.size, np.inf)
        lower[-1], upper[-1] = self.scenario.t_f_range
        nd, nb = self.n_dyn, self.n_bc
        blocks = [
            Block("dynamics", "eq", slice(0, nd)),
            Block("boundary", "eq", slice(nd, nd + nb)),
            Block("bounds", "ineq", slice(0, self.n_bounds)),
            Block("obstacles", "ineq", slice(self.n_bounds, self.n_bounds + self.n_obs)),
        ]
        return NlpProblem(
            x0=self.initial_guess(), lower=lower, upper=upper,
            objective=self.objective, eq=self.eq, ineq=self.ineq,
            objective_grad=self.objective_grad, eq_jac=self.eq_jac, ineq_jac=self.ineq_jac,
            lagrangian_hessian=self.lagrangian_hessian if self.cost_spec.mode == "leader" else None,
            layout=L, blocks=blocks, diagnostics=self.diagnostics,
        )

    def diagnostics(self, x) -> dict:
        fields, t_f = unpack(x, self.layout, self.scenario.s_f)
        out = {"t_f": t_f}
        if self.scenario.obstacles:
            q = geo.ClearanceQuery(self.scenario.epsilon, 10)
            out["min_clearance"] = min(geo.surface_min_distance(fields.r, o, q).lower for o in self.scenario.obstacles)
        return out


def assemble(scenario: Scenario) -> NlpProblem:
    """Transcribe a scenario into an NLP with exact derivatives."""
    return Transcription(scenario).problem()


@dataclass
class AgentTrajectories:
    s: np.ndarray        # (n_v,)
    t: np.ndarray        # (T,)
    r: np.ndarray        # (n_v, T, 3)
    euler: np.ndarray    # (n_v, T, 3)
    v: np.ndarray        # (n_v, T, 3)
    omega: np.ndarray    # (n_v, T, 3)


def agent_parameters(n_v: int, s_f: float) -> np.ndarray:
    """Equally spaced agent positions s_i = i s_f / n_v, i = 1..n_v."""
    if n_v < 1:
        raise ValueError("n_v must be at least 1")
    return np.arange(1, n_v + 1) * (s_f / n_v)


def extract_agents(fields: cs.RodFields, n_v: int, t_samples) -> AgentTrajectories:
    """Evaluate r, attitude, v and omega along each agent's s_i over the time samples."""
    s = agent_parameters(n_v, fields.s_f)
    t = np.asarray(t_samples, dtype=float)
    out = [bz.eval_grid(f, s, t) for f in (fields.r, fields.euler, fields.v, fields.omega)]
    return AgentTrajectories(s, t, *out)
