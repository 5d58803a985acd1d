"""
Cosserat rod kinematics on Bernstein-surface fields.

Attitude is carried by intrinsic Z-Y-X Euler angles, R = Rz(psi) Ry(theta) Rx(phi).
The rotation PDEs R_s = R h^ and R_t = R w^ are imposed in their equivalent
body-rate form E(phi, theta) d(angles) = h (resp. w), which avoids nine
redundant matrix-entry residuals per node.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import bernstein as bz
from .errors import ShapeError, SingularityError

GIMBAL_TOL = 1e-6


def skew(w) -> np.ndarray:
    """Skew-symmetric matrix with skew(w) @ x == cross(w, x)."""
    w = np.asarray(w, dtype=float)
    out = np.zeros(w.shape[:-1] + (3, 3))
    out[..., 0, 1], out[..., 0, 2] = -w[..., 2], w[..., 1]
    out[..., 1, 0], out[..., 1, 2] = w[..., 2], -w[..., 0]
    out[..., 2, 0], out[..., 2, 1] = -w[..., 1], w[..., 0]
    return out


def vee(S) -> np.ndarray:
    S = np.asarray(S, dtype=float)
    return np.stack([S[..., 2, 1], S[..., 0, 2], S[..., 1, 0]], axis=-1)


def _rotation_parts(phi, theta, psi):
    cf, sf = np.cos(phi), np.sin(phi)
    ct, st = np.cos(theta), np.sin(theta)
    cp, sp = np.cos(psi), np.sin(psi)
    shape = np.shape(cf)
    z, o = np.zeros(shape), np.ones(shape)
    Rx = np.stack([np.stack([o, z, z], -1), np.stack([z, cf, -sf], -1), np.stack([z, sf, cf], -1)], -2)
    Ry = np.stack([np.stack([ct, z, st], -1), np.stack([z, o, z], -1), np.stack([-st, z, ct], -1)], -2)
    Rz = np.stack([np.stack([cp, -sp, z], -1), np.stack([sp, cp, z], -1), np.stack([z, z, o], -1)], -2)
    dRx = np.stack([np.stack([z, z, z], -1), np.stack([z, -sf, -cf], -1), np.stack([z, cf, -sf], -1)], -2)
    dRy = np.stack([np.stack([-st, z, ct], -1), np.stack([z, z, z], -1), np.stack([-ct, z, -st], -1)], -2)
    dRz = np.stack([np.stack([-sp, -cp, z], -1), np.stack([cp, -sp, z], -1), np.stack([z, z, z], -1)], -2)
    return Rx, Ry, Rz, dRx, dRy, dRz


def rotation_from_euler(phi, theta, psi) -> np.ndarray:
    """Rz(psi) @ Ry(theta) @ Rx(phi); broadcasts over array inputs."""
    Rx, Ry, Rz, *_ = _rotation_parts(phi, theta, psi)
    return Rz @ Ry @ Rx


def rotation_partials(phi, theta, psi):
    """R and its partial derivatives with respect to (phi, theta, psi)."""
    Rx, Ry, Rz, dRx, dRy, dRz = _rotation_parts(phi, theta, psi)
    R = Rz @ Ry @ Rx
    return R, (Rz @ Ry @ dRx, Rz @ dRy @ Rx, dRz @ Ry @ Rx)


def rotation_second_partials(phi, theta, psi):
    """Second partials of R as a (3, 3, ..., 3, 3) array indexed by angle pairs."""
    Rx, Ry, Rz, dRx, dRy, dRz = _rotation_parts(phi, theta, psi)
    # second derivative of a single-axis rotation drops its fixed axis entry
    Px, Py, Pz = np.diag([0.0, 1.0, 1.0]), np.diag([1.0, 0.0, 1.0]), np.diag([1.0, 1.0, 0.0])
    ddRx, ddRy, ddRz = -(Px @ Rx), -(Py @ Ry), -(Pz @ Rz)
    rot = [(Rx, dRx, ddRx), (Ry, dRy, ddRy), (Rz, dRz, ddRz)]
    out = np.empty((3, 3) + np.shape(Rx))
    for q in range(3):
        for k in range(3):
            order = [0, 0, 0]
            order[q] += 1
            order[k] += 1
            out[q, k] = rot[2][order[2]] @ rot[1][order[1]] @ rot[0][order[0]]
    return out


def euler_rate_map(phi, theta, node=None) -> np.ndarray:
    """E with body angular rate = E @ (dphi, dtheta, dpsi).

    Raises SingularityError when |cos(theta)| <= 1e-6 anywhere.
    """
    phi = np.asarray(phi, dtype=float)
    theta = np.asarray(theta, dtype=float)
    ct = np.cos(theta)
    if np.any(np.abs(ct) <= GIMBAL_TOL):
        bad = np.argwhere(np.atleast_1d(np.abs(ct) <= GIMBAL_TOL))[0]
        where = node[tuple(bad)] if node is not None else tuple(bad)
        raise SingularityError(f"gimbal lock: |cos(theta)| <= {GIMBAL_TOL} at node {where}", where)
    return _rate_map(phi, theta)


def _rate_map(phi, theta):
    cf, sf = np.cos(phi), np.sin(phi)
    ct, st = np.cos(theta), np.sin(theta)
    z, o = np.zeros(np.shape(cf)), np.ones(np.shape(cf))
    return np.stack([
        np.stack([o, z, -st], -1),
        np.stack([z, cf, sf * ct], -1),
        np.stack([z, -sf, cf * ct], -1),
    ], -2)


def _rate_map_partials(phi, theta):
    cf, sf = np.cos(phi), np.sin(phi)
    ct, st = np.cos(theta), np.sin(theta)
    z = np.zeros(np.shape(cf))
    dphi = np.stack([
        np.stack([z, z, z], -1),
        np.stack([z, -sf, cf * ct], -1),
        np.stack([z, -cf, -sf * ct], -1),
    ], -2)
    dtheta = np.stack([
        np.stack([z, z, -ct], -1),
        np.stack([z, z, -sf * st], -1),
        np.stack([z, z, -cf * st], -1),
    ], -2)
    return dphi, dtheta


def _rate_map_second_partials(phi, theta):
    """(phi, phi), (phi, theta), (theta, theta) second partials of E."""
    cf, sf = np.cos(phi), np.sin(phi)
    ct, st = np.cos(theta), np.sin(theta)
    z = np.zeros(np.shape(cf))
    pp = np.stack([
        np.stack([z, z, z], -1),
        np.stack([z, -cf, -sf * ct], -1),
        np.stack([z, sf, -cf * ct], -1),
    ], -2)
    pt = np.stack([
        np.stack([z, z, z], -1),
        np.stack([z, z, -cf * st], -1),
        np.stack([z, z, sf * st], -1),
    ], -2)
    tt = np.stack([
        np.stack([z, z, st], -1),
        np.stack([z, z, -sf * ct], -1),
        np.stack([z, z, -cf * ct], -1),
    ], -2)
    return pp, pt, tt


@dataclass(frozen=True, eq=False)
class RodFields:
    """Bernstein surfaces describing one rod state over [0, s_f] x [0, t_f].

    ``euler`` holds (phi, theta, psi) as the three components of one surface.
    """

    r: bz.BernsteinSurface
    euler: bz.BernsteinSurface
    l: bz.BernsteinSurface
    h: bz.BernsteinSurface
    v: bz.BernsteinSurface
    omega: bz.BernsteinSurface

    def __post_init__(self):
        ref = self.r
        for name in ("r", "euler", "l", "h", "v", "omega"):
            f = getattr(self, name)
            if f.is_scalar or f.dim != 3:
                raise ShapeError(f"field {name} must be a 3-vector surface")
            if (f.m, f.n) != (ref.m, ref.n) or not bz._same_domain(f, ref):
                raise ShapeError(f"field {name} degree/domain differs from r")

    @property
    def m(self):
        return self.r.m

    @property
    def n(self):
        return self.r.n

    @property
    def s_f(self):
        return self.r.s_f

    @property
    def t_f(self):
        return self.r.t_f

    def surfaces(self):
        return (self.r, self.euler, self.l, self.h, self.v, self.omega)

    @classmethod
    def from_nets(cls, nets, s_f, t_f):
        """Build from six (m+1, n+1, 3) nets ordered r, euler, l, h, v, omega."""
        return cls(*(bz.BernsteinSurface(net, s_f, t_f) for net in nets))


@dataclass(frozen=True, eq=False)
class CollocationGrid:
    s_nodes: np.ndarray
    t_nodes: np.ndarray

    @classmethod
    def uniform(cls, m, n, s_f, t_f, n_s=None, n_t=None):
        n_s = 2 * m + 1 if n_s is None else n_s
        n_t = 2 * n + 1 if n_t is None else n_t
        if n_s < m + 1 or n_t < n + 1:
            raise ShapeError(f"collocation grid {n_s}x{n_t} too coarse for degree ({m}, {n})")
        return cls(np.linspace(0.0, s_f, n_s), np.linspace(0.0, t_f, n_t))

    @property
    def shape(self):
        return len(self.s_nodes), len(self.t_nodes)


class KinematicsOperator:
    """Residuals of the kinematic PDEs at collocation nodes, with exact Jacobian.

    Works on stacked flat nets X of shape (18, (m+1)(n+1)) ordered
    r(3), euler(3), l(3), h(3), v(3), omega(3). Nodes are given as fractions
    of the domain so that the operator does not depend on t_f; t-derivatives
    are scaled by 1/t_f at evaluation time.
    """

    def __init__(self, m, n, s_f, u_nodes, w_nodes):
        self.m, self.n, self.s_f = m, n, float(s_f)
        self.u_nodes = np.asarray(u_nodes, dtype=float)
        self.w_nodes = np.asarray(w_nodes, dtype=float)
        Bs = bz.basis_matrix(m, self.u_nodes)
        Bt = bz.basis_matrix(n, self.w_nodes)
        dBs = Bs @ bz.differentiation_matrix(m, s_f).T
        dBt = Bt @ bz.differentiation_matrix(n, 1.0).T
        self.A0 = np.kron(Bs, Bt)
        self.As = np.kron(dBs, Bt)
        self.At = np.kron(Bs, dBt)
        self.n_nodes = self.A0.shape[0]
        self.node_params = np.stack(np.meshgrid(self.u_nodes, self.w_nodes, indexing="ij"), -1).reshape(-1, 2)

    @classmethod
    def for_grid(cls, m, n, s_f, t_f, grid: CollocationGrid):
        return cls(m, n, s_f, np.asarray(grid.s_nodes) / s_f, np.asarray(grid.t_nodes) / t_f)

    def _node_label(self, t_f):
        return self.node_params * [self.s_f, t_f]

    def residuals(self, X, t_f, jacobian=False):
        X = np.asarray(X, dtype=float)
        V0 = X @ self.A0.T
        Vs = X @ self.As.T
        Vt = X @ self.At.T / t_f
        phi, theta, psi = V0[3], V0[4], V0[5]
        labels = self._node_label(t_f)
        E = euler_rate_map(phi, theta, node=labels)
        R, dR = rotation_partials(phi, theta, psi)
        l, h, v, w = V0[6:9].T, V0[9:12].T, V0[12:15].T, V0[15:18].T
        ang_s, ang_t = Vs[3:6].T, Vt[3:6].T
        res = np.empty((self.n_nodes, 12))
        res[:, 0:3] = Vs[0:3].T - np.einsum("pab,pb->pa", R, l)
        res[:, 3:6] = Vt[0:3].T - np.einsum("pab,pb->pa", R, v)
        res[:, 6:9] = np.einsum("pab,pb->pa", E, ang_s) - h
        res[:, 9:12] = np.einsum("pab,pb->pa", E, ang_t) - w
        if not jacobian:
            return res.ravel()
        return res.ravel(), self._jacobian(X, t_f, R, dR, E, l, v, ang_s, ang_t, Vt)

    def _jacobian(self, X, t_f, R, dR, E, l, v, ang_s, ang_t, Vt):
        P, N = self.n_nodes, X.shape[1]
        A0, As, At = self.A0, self.As, self.At / t_f
        J = np.zeros((P, 12, 18, N))
        eye = np.eye(3)
        # r_s - R l
        J[:, 0:3, 0:3, :] = eye[None, :, :, None] * As[:, None, None, :]
        J[:, 0:3, 6:9, :] = -R[..., None] * A0[:, None, None, :]
        # r_t - R v
        J[:, 3:6, 0:3, :] = eye[None, :, :, None] * At[:, None, None, :]
        J[:, 3:6, 12:15, :] = -R[..., None] * A0[:, None, None, :]
        for q in range(3):
            J[:, 0:3, 3 + q, :] = -np.einsum("pab,pb->pa", dR[q], l)[..., None] * A0[:, None, :]
            J[:, 3:6, 3 + q, :] = -np.einsum("pab,pb->pa", dR[q], v)[..., None] * A0[:, None, :]
        # E ang_s - h, E ang_t - w
        dE = _rate_map_partials(X[3] @ A0.T, X[4] @ A0.T)
        J[:, 6:9, 3:6, :] = E[..., None] * As[:, None, None, :]
        J[:, 9:12, 3:6, :] = E[..., None] * At[:, None, None, :]
        for q in range(2):
            J[:, 6:9, 3 + q, :] += np.einsum("pab,pb->pa", dE[q], ang_s)[..., None] * A0[:, None, :]
            J[:, 9:12, 3 + q, :] += np.einsum("pab,pb->pa", dE[q], ang_t)[..., None] * A0[:, None, :]
        J[:, 6:9, 9:12, :] = -eye[None, :, :, None] * A0[:, None, None, :]
        J[:, 9:12, 15:18, :] = -eye[None, :, :, None] * A0[:, None, None, :]
        jt = np.zeros((P, 12))
        jt[:, 3:6] = -Vt[0:3].T / t_f
        jt[:, 9:12] = -np.einsum("pab,pb->pa", E, ang_t) / t_f
        return np.hstack([J.reshape(P * 12, 18 * N), jt.reshape(P * 12, 1)])


    def lagrangian_hessian(self, X, t_f, weights) -> np.ndarray:
        """Hessian of weights @ residuals over (flat nets, t_f), shape (18N+1, 18N+1)."""
        X = np.asarray(X, dtype=float)
        P, N = self.n_nodes, X.shape[1]
        w = np.asarray(weights, dtype=float).reshape(P, 12)
        w1, w2, w3, w4 = w[:, 0:3], w[:, 3:6], w[:, 6:9], w[:, 9:12]
        g, g1, g2 = 1.0 / t_f, -1.0 / t_f**2, 2.0 / t_f**3
        V0, Vs, Vtu = X @ self.A0.T, X @ self.As.T, X @ self.At.T
        phi, theta, psi = V0[3], V0[4], V0[5]
        l, v = V0[6:9].T, V0[12:15].T
        ang_s, ang_tu, r_tu = Vs[3:6].T, Vtu[3:6].T, Vtu[0:3].T
        _, dR = rotation_partials(phi, theta, psi)
        ddR = rotation_second_partials(phi, theta, psi)
        E = _rate_map(phi, theta)
        dE = _rate_map_partials(phi, theta)
        Epp, Ept, Ett = _rate_map_second_partials(phi, theta)
        ddE = {(0, 0): Epp, (0, 1): Ept, (1, 0): Ept, (1, 1): Ett}
        ops = {"0": self.A0, "s": self.As, "t": self.At}
        H = np.zeros((18 * N + 1, 18 * N + 1))

        def add(i, oi, j, oj, coef):
            blk = ops[oi].T @ (coef[:, None] * ops[oj])
            H[i * N:(i + 1) * N, j * N:(j + 1) * N] += blk
            if (i, oi) != (j, oj):
                H[j * N:(j + 1) * N, i * N:(i + 1) * N] += blk.T

        def mv(M, x):
            return np.einsum("pab,pb->pa", M, x)

        for q in range(3):
            for k in range(q, 3):
                coef = -np.einsum("pa,pa->p", w1, mv(ddR[q, k], l)) - np.einsum("pa,pa->p", w2, mv(ddR[q, k], v))
                if q < 2 and k < 2:
                    coef = coef + np.einsum("pa,pa->p", w3, mv(ddE[q, k], ang_s))
                    coef = coef + g * np.einsum("pa,pa->p", w4, mv(ddE[q, k], ang_tu))
                if q == k:
                    add(3 + q, "0", 3 + k, "0", coef)
                else:
                    blk = self.A0.T @ (coef[:, None] * self.A0)
                    H[(3 + q) * N:(4 + q) * N, (3 + k) * N:(4 + k) * N] += blk
                    H[(3 + k) * N:(4 + k) * N, (3 + q) * N:(4 + q) * N] += blk.T
            RTw1 = -np.einsum("pab,pa->pb", dR[q], w1)
            RTw2 = -np.einsum("pab,pa->pb", dR[q], w2)
            for k in range(3):
                add(3 + q, "0", 6 + k, "0", RTw1[:, k])
                add(3 + q, "0", 12 + k, "0", RTw2[:, k])
            if q < 2:
                ETw3 = np.einsum("pab,pa->pb", dE[q], w3)
                ETw4 = g * np.einsum("pab,pa->pb", dE[q], w4)
                for k in range(3):
                    add(3 + q, "0", 3 + k, "s", ETw3[:, k])
                    add(3 + q, "0", 3 + k, "t", ETw4[:, k])
        # t_f row and column
        col = np.zeros(18 * N)
        for k in range(3):
            col[k * N:(k + 1) * N] += g1 * (self.At.T @ w2[:, k])
        Etw4 = np.einsum("pab,pa->pb", E, w4)
        for k in range(3):
            col[(3 + k) * N:(4 + k) * N] += g1 * (self.At.T @ Etw4[:, k])
        for q in range(2):
            coef = g1 * np.einsum("pa,pa->p", w4, mv(dE[q], ang_tu))
            col[(3 + q) * N:(4 + q) * N] += self.A0.T @ coef
        H[:-1, -1] = col
        H[-1, :-1] = col
        H[-1, -1] = g2 * (np.sum(w2 * r_tu) + np.sum(w4 * mv(E, ang_tu)))
        return H


def stack_nets(fields: RodFields) -> np.ndarray:
    """Flat nets (18, (m+1)(n+1)) in the order used by KinematicsOperator."""
    out = []
    for f in fields.surfaces():
        for k in range(3):
            out.append(f.net[:, :, k].ravel())
    return np.array(out)


def kinematic_residuals(fields: RodFields, grid: CollocationGrid) -> np.ndarray:
    """Stacked residuals per node: r_s - R l, r_t - R v, E ang_s - h, E ang_t - w.

    Nodes are ordered s-major; the result has length 12 * N_s * N_t.
    """
    op = KinematicsOperator.for_grid(fields.m, fields.n, fields.s_f, fields.t_f, grid)
    return op.residuals(stack_nets(fields), fields.t_f)
