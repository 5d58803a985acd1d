"""
Augmented Lagrangian NLP solver with a bounded Newton inner loop.

Equalities enter through first-order multipliers with a quadratic penalty,
inequalities through the Rockafellar squared-hinge form. Each inner problem is
a box-constrained smooth minimization. It uses a Levenberg-damped Newton step
on the exact merit Hessian when the problem supplies a Lagrangian Hessian, and
a structured quasi-Newton model otherwise; L-BFGS-B is kept as an option. Outer iterates are
accepted only if they do not increase the worst constraint violation once the
penalty has started to grow; repeated rejections end the run with a stall.
"""

from __future__ import annotations

import logging
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import cho_factor, cho_solve
from scipy.optimize import minimize as _lbfgsb

from .errors import EvaluationError

log = logging.getLogger(__name__)


@dataclass
class SolverOptions:
    max_outer_iterations: int = 30
    max_inner_iterations: int = 200
    eq_tol: float = 1e-6
    ineq_tol: float = 1e-6
    stall_tol: float = 1e-6
    fd_step: float = 1e-6
    penalty_growth: float = 10.0
    initial_penalty: float = 1.0
    max_penalty: float = 1e12
    central_differences: bool = False
    workers: int = 1
    max_rejections: int = 3
    optimality_tol: float = 1e-6
    inner_solver: str = "auto"
    seed: int = 0

    def __post_init__(self):
        for name in ("eq_tol", "ineq_tol", "stall_tol", "fd_step", "initial_penalty"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        if not self.penalty_growth > 1:
            raise ValueError("penalty_growth must exceed 1")
        if self.inner_solver not in ("auto", "newton", "structured", "lbfgsb"):
            raise ValueError(f"unknown inner solver {self.inner_solver!r}")


@dataclass
class SolveReport:
    cost: float
    max_eq_violation: float
    max_ineq_violation: float
    outer_iterations: int
    inner_iterations: int
    termination: str
    success: bool
    wall_time: float
    blocks: dict = field(default_factory=dict)
    min_clearance: float | None = None
    history: list = field(default_factory=list)
    diagnostics: dict = field(default_factory=dict)

    def as_dict(self) -> dict:
        return {
            "cost": self.cost,
            "max_eq_violation": self.max_eq_violation,
            "max_ineq_violation": self.max_ineq_violation,
            "outer_iterations": self.outer_iterations,
            "inner_iterations": self.inner_iterations,
            "termination": self.termination,
            "success": self.success,
            "wall_time": self.wall_time,
            "blocks": self.blocks,
            "min_clearance": self.min_clearance,
            "diagnostics": self.diagnostics,
        }


def _check_finite(values, x, what):
    values = np.asarray(values, dtype=float)
    if not np.all(np.isfinite(values)):
        bad = int(np.flatnonzero(~np.isfinite(np.atleast_1d(values)))[0])
        raise EvaluationError(f"non-finite {what} (entry {bad})", x=np.array(x), index=bad)
    return values


def gradient(f, x, step: float = 1e-6, central: bool = False, workers: int = 1) -> np.ndarray:
    """Finite-difference gradient of a scalar function (forward by default)."""
    if not step > 0:
        raise ValueError("step must be positive")
    x = np.asarray(x, dtype=float)

    def probe(k):
        e = np.zeros_like(x)
        e[k] = step
        if central:
            hi, lo = f(x + e), f(x - e)
            val = (hi - lo) / (2 * step)
        else:
            val = (f(x + e) - f0) / step
        if not np.isfinite(val):
            raise EvaluationError(f"non-finite evaluation while differencing index {k}", x=x, index=k)
        return val

    f0 = None if central else f(x)
    if f0 is not None and not np.isfinite(f0):
        raise EvaluationError("non-finite evaluation at the base point", x=x)
    if workers > 1:
        with ThreadPoolExecutor(workers) as pool:
            return np.array(list(pool.map(probe, range(x.size))))
    return np.array([probe(k) for k in range(x.size)])


def jacobian_fd(c, x, step: float = 1e-6, central: bool = False) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    c0 = np.asarray(c(x), dtype=float)
    J = np.zeros((c0.size, x.size))
    for k in range(x.size):
        e = np.zeros_like(x)
        e[k] = step
        if central:
            J[:, k] = (np.asarray(c(x + e)) - np.asarray(c(x - e))) / (2 * step)
        else:
            J[:, k] = (np.asarray(c(x + e)) - c0) / step
    return J


def _violations(ce, ci):
    eq = float(np.abs(ce).max()) if ce.size else 0.0
    iq = float(max(0.0, ci.max())) if ci.size else 0.0
    return eq, iq


def _projected_gradient(x, g, lower, upper):
    pg = g.copy()
    pg[(x <= lower) & (g > 0)] = 0.0
    pg[(x >= upper) & (g < 0)] = 0.0
    return pg


class _Penalty:
    """Augmented Lagrangian pieces at fixed multipliers and penalty."""

    def __init__(self, f, fgrad, ceq, cin, ejac, ijac, hess=None):
        self.f, self.fgrad, self.ceq, self.cin, self.ejac, self.ijac = f, fgrad, ceq, cin, ejac, ijac
        self.hess = hess

    def value(self, z, lam, nu, mu):
        fz = float(_check_finite(self.f(z), z, "objective"))
        ce = _check_finite(self.ceq(z), z, "equality constraint")
        ci = _check_finite(self.cin(z), z, "inequality constraint")
        shifted = np.maximum(0.0, nu + mu * ci)
        return float(fz + lam @ ce + 0.5 * mu * ce @ ce + (shifted @ shifted - nu @ nu) / (2 * mu))

    def full(self, z, lam, nu, mu, second_order=False):
        """Value, gradient and Gauss-Newton matrix of the merit.

        With ``second_order`` the constraint and objective curvature from the
        problem's Lagrangian Hessian is added, giving the exact merit Hessian.
        """
        val = self.value(z, lam, nu, mu)
        ce, ci = np.asarray(self.ceq(z), float), np.asarray(self.cin(z), float)
        g = _check_finite(self.fgrad(z), z, "objective gradient").copy()
        G = np.zeros((z.size, z.size))
        w_eq = lam + mu * ce
        shifted = np.maximum(0.0, nu + mu * ci)
        if ce.size:
            Je = np.asarray(self.ejac(z), float)
            g += Je.T @ w_eq
            G += mu * Je.T @ Je
        if ci.size:
            Ji = np.asarray(self.ijac(z), float)
            g += Ji.T @ shifted
            act = shifted > 0
            if act.any():
                G += mu * Ji[act].T @ Ji[act]
        if second_order:
            G += self.hess(z, w_eq, shifted)
        return val, g, G


def _inner_structured(pen, x, lam, nu, mu, lower, upper, opts, tol):
    """Minimize the merit at fixed multipliers by damped structured quasi-Newton steps.

    The penalty terms get their Gauss-Newton matrix; the remaining curvature is
    carried by a BFGS matrix with Powell damping. A Levenberg parameter acts as
    a trust region and the step is projected onto the box.
    """
    n = x.size
    val, g, G = pen.full(x, lam, nu, mu)
    H = np.eye(n) * 1e-8
    sigma = 1e-6 * max(1.0, float(np.abs(np.diag(G)).max()) if n else 1.0)
    it = 0
    for it in range(1, opts.max_inner_iterations + 1):
        pg = _projected_gradient(x, g, lower, upper)
        if np.abs(pg).max() <= tol:
            return x, it - 1, True
        free = ~(((x <= lower) & (g > 0)) | ((x >= upper) & (g < 0)))
        B = (G + H)[np.ix_(free, free)]
        accepted = False
        while not accepted:
            step = np.zeros(n)
            try:
                step[free] = -np.linalg.solve(B + sigma * np.eye(B.shape[0]), g[free])
            except np.linalg.LinAlgError:
                sigma *= 10.0
                continue
            x_new = np.clip(x + step, lower, upper)
            s = x_new - x
            val_new = pen.value(x_new, lam, nu, mu)
            predicted = -(g @ s + 0.5 * s @ (G + H) @ s)
            actual = val - val_new
            if actual > 0 and actual >= 1e-4 * max(predicted, 0.0):
                accepted = True
                sigma = max(sigma * (0.3 if actual > 0.75 * predicted else 1.0), 1e-14)
            else:
                sigma *= 8.0
                if sigma > 1e20 or np.abs(s).max() <= 1e-16 * (1.0 + np.abs(x).max()):
                    return x, it, False
        _, g_new, G_new = pen.full(x_new, lam, nu, mu)
        y = g_new - g - G_new @ s
        # Powell-damped BFGS update of the residual curvature
        Hs = H @ s
        sHs = float(s @ Hs)
        sy = float(s @ y)
        if sHs > 0:
            theta = 1.0 if sy >= 0.2 * sHs else 0.8 * sHs / (sHs - sy)
            r = theta * y + (1 - theta) * Hs
            sr = float(s @ r)
            if sr > 1e-16 * sHs:
                H = H - np.outer(Hs, Hs) / sHs + np.outer(r, r) / sr
        elif sy > 0:
            H = H + np.outer(y, y) / sy
        x, val, g, G = x_new, val_new, g_new, G_new
    pg = _projected_gradient(x, g, lower, upper)
    return x, it, bool(np.abs(pg).max() <= tol)


def _inner_newton(pen, x, lam, nu, mu, lower, upper, opts, tol):
    """Minimize the merit at fixed multipliers with exact-Hessian Newton steps.

    Indefinite Hessians are handled by a Levenberg shift chosen so that a
    Cholesky factorization succeeds; the shift doubles as a trust region.
    """
    n = x.size
    val, g, G = pen.full(x, lam, nu, mu, second_order=True)
    scale = max(1.0, float(np.abs(np.diag(G)).max()))
    sigma = 1e-10 * scale
    it = stagnant = 0
    for it in range(1, opts.max_inner_iterations + 1):
        pg = _projected_gradient(x, g, lower, upper)
        if np.abs(pg).max() <= tol:
            return x, it - 1, True
        free = ~(((x <= lower) & (g > 0)) | ((x >= upper) & (g < 0)))
        B = G[np.ix_(free, free)]
        eye = np.eye(B.shape[0])
        while True:
            try:
                c = cho_factor(B + sigma * eye)
            except np.linalg.LinAlgError:
                sigma = max(sigma * 10.0, 1e-12 * scale)
                continue
            step = np.zeros(n)
            step[free] = -cho_solve(c, g[free])
            x_new = np.clip(x + step, lower, upper)
            s = x_new - x
            val_new = pen.value(x_new, lam, nu, mu)
            predicted = -(g @ s + 0.5 * s @ G @ s)
            actual = val - val_new
            if actual > 0 and (predicted <= 0 or actual >= 1e-4 * predicted):
                if predicted > 0 and actual > 0.75 * predicted:
                    sigma = max(sigma * 0.1, 1e-16 * scale)
                break
            sigma = max(sigma * 8.0, 1e-12 * scale)
            if sigma > 1e20 * scale or np.abs(s).max() <= 1e-15 * (1.0 + np.abs(x).max()):
                return x, it, False
        # stop when the merit no longer moves at working precision
        stagnant = stagnant + 1 if val - val_new <= 1e-13 * (1.0 + abs(val)) else 0
        x = x_new
        val, g, G = pen.full(x, lam, nu, mu, second_order=True)
        if stagnant >= 5:
            return x, it, False
    pg = _projected_gradient(x, g, lower, upper)
    return x, it, bool(np.abs(pg).max() <= tol)


def _inner_lbfgsb(pen, x, lam, nu, mu, lower, upper, opts, tol):
    def merit(z):
        val, g, _ = pen.full(z, lam, nu, mu)
        return val, g

    bounds = list(zip(np.where(np.isfinite(lower), lower, None), np.where(np.isfinite(upper), upper, None)))
    res = _lbfgsb(merit, x, jac=True, method="L-BFGS-B", bounds=bounds,
                  options={"maxiter": opts.max_inner_iterations, "maxcor": 30, "ftol": 1e-16, "gtol": tol})
    return np.clip(res.x, lower, upper), int(res.nit), bool(res.success)


def minimize(problem, opts: SolverOptions | None = None):
    """Solve ``problem`` (an NlpProblem); returns (x_star, SolveReport)."""
    opts = opts or SolverOptions()
    t0 = time.perf_counter()
    lower = np.asarray(problem.lower, dtype=float)
    upper = np.asarray(problem.upper, dtype=float)
    x = np.clip(np.asarray(problem.x0, dtype=float), lower, upper)

    f = problem.objective
    ceq, cin = problem.eq, problem.ineq
    fd = dict(step=opts.fd_step, central=opts.central_differences)
    fgrad = problem.objective_grad or (lambda z: gradient(f, z, workers=opts.workers, **fd))
    ejac = problem.eq_jac or (lambda z: jacobian_fd(ceq, z, **fd))
    ijac = problem.ineq_jac or (lambda z: jacobian_fd(cin, z, **fd))
    hess = getattr(problem, "lagrangian_hessian", None)
    pen = _Penalty(f, fgrad, ceq, cin, ejac, ijac, hess)
    choice = opts.inner_solver
    if choice == "auto":
        choice = "newton" if hess is not None else "structured"
    if choice == "newton" and hess is None:
        raise ValueError("newton inner solver needs problem.lagrangian_hessian")
    inner = {"newton": _inner_newton, "structured": _inner_structured, "lbfgsb": _inner_lbfgsb}[choice]

    ce, ci = np.asarray(ceq(x), float), np.asarray(cin(x), float)
    lam = np.zeros(ce.size)
    nu = np.zeros(ci.size)
    mu = opts.initial_penalty
    best_viol = np.inf  # over accepted outer iterates only
    prev_f = float(f(x))
    history = []
    inner_total = 0
    penalty_grown = False
    rejections = 0
    termination = "max outer iterations reached"
    outer = 0
    tol = opts.optimality_tol
    for outer in range(1, opts.max_outer_iterations + 1):
        x_new, nit, inner_ok = inner(pen, x, lam, nu, mu, lower, upper, opts, tol)
        inner_total += nit
        ce, ci = np.asarray(ceq(x_new), float), np.asarray(cin(x_new), float)
        veq, vin = _violations(ce, ci)
        viol = max(veq, vin)
        f_new = float(f(x_new))
        history.append({"outer": outer, "penalty": mu, "cost": f_new, "eq": veq, "ineq": vin, "inner": nit})
        log.info("outer %d: mu=%.1e cost=%.6g eq=%.2e ineq=%.2e inner=%d", outer, mu, f_new, veq, vin, nit)

        feasible = veq <= opts.eq_tol and vin <= opts.ineq_tol
        if penalty_grown and viol > best_viol and not feasible:
            rejections += 1
            history[-1]["rejected"] = True
            if rejections > opts.max_rejections or mu >= opts.max_penalty:
                termination = "stall: constraint violation stopped decreasing"
                break
            mu = min(mu * opts.penalty_growth, opts.max_penalty)
            continue
        rejections = 0
        x = x_new
        stalled = abs(f_new - prev_f) <= opts.stall_tol * (1.0 + abs(f_new))
        if feasible and (inner_ok or stalled):
            termination = "converged"
            break
        if viol <= 0.25 * best_viol or feasible:
            lam = lam + mu * ce
            nu = np.maximum(0.0, nu + mu * ci)
        else:
            if mu >= opts.max_penalty:
                termination = "stall: penalty limit reached"
                break
            mu = min(mu * opts.penalty_growth, opts.max_penalty)
            penalty_grown = True
        best_viol = min(best_viol, viol)
        prev_f = f_new

    # report from the returned point only
    ce, ci = np.asarray(ceq(x), float), np.asarray(cin(x), float)
    veq, vin = _violations(ce, ci)
    success = veq <= opts.eq_tol and vin <= opts.ineq_tol
    if success and termination != "converged":
        termination = f"feasible; {termination}"
    report = SolveReport(
        cost=float(f(x)), max_eq_violation=veq, max_ineq_violation=vin,
        outer_iterations=outer, inner_iterations=inner_total, termination=termination,
        success=success, wall_time=0.0, history=history,
    )
    if getattr(problem, "blocks", None):
        report.blocks = problem.block_summary(x)
    if getattr(problem, "diagnostics", None):
        report.diagnostics = problem.diagnostics(x)
        report.min_clearance = report.diagnostics.get("min_clearance")
    report.wall_time = time.perf_counter() - t0
    return x, report
