"""
Tensor-product Bernstein (Bezier) surfaces over rectangular domains.

A surface of degree (m, n) on [s0, s0 + s_f] x [t0, t0 + t_f] is stored as its
control net, an array of shape (m+1, n+1) for scalar fields or (m+1, n+1, d)
for vector fields. Surfaces are immutable; every operation returns a new one.

Most operators are linear maps on the control net and are also exposed as
matrices (elevation, differentiation, restriction, products) so that the
transcription layer can assemble exact Jacobians from them.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache
from typing import NamedTuple

import numpy as np

from .errors import DomainError, ShapeError

_EXACT_BINOMIAL_MAX = 20
_DOMAIN_TOL = 1e-12


def binomial(k: int, i: int) -> float:
    """C(k, i), exact below degree 20 and via log-gamma above."""
    if i < 0 or i > k:
        return 0.0
    if k <= _EXACT_BINOMIAL_MAX:
        return float(math.comb(k, i))
    return math.exp(math.lgamma(k + 1) - math.lgamma(i + 1) - math.lgamma(k - i + 1))


def _check_param(x, length, offset=0.0):
    lo, hi = offset, offset + length
    slack = _DOMAIN_TOL * max(1.0, abs(hi))
    x = np.asarray(x, dtype=float)
    if np.any(x < lo - slack) or np.any(x > hi + slack) or not np.all(np.isfinite(x)):
        raise DomainError(f"parameter {x} outside [{lo}, {hi}]")
    return np.clip((x - offset) / length, 0.0, 1.0)


def basis(i: int, k: int, s: float, length: float) -> float:
    """Value of the i-th degree-k Bernstein polynomial on [0, length] at s."""
    if k < 0 or not 0 <= i <= k:
        raise DomainError(f"basis index {i} out of range for degree {k}")
    if not length > 0:
        raise DomainError("interval length must be positive")
    u = float(_check_param(s, length))
    return binomial(k, i) * u**i * (1.0 - u) ** (k - i)


def basis_matrix(k: int, u) -> np.ndarray:
    """Rows of all degree-k basis values at normalized parameters ``u`` in [0, 1]."""
    u = np.atleast_1d(np.asarray(u, dtype=float))[:, None]
    i = np.arange(k + 1)[None, :]
    c = np.array([binomial(k, j) for j in range(k + 1)])[None, :]
    return c * u**i * (1.0 - u) ** (k - i)


def basis_derivative_matrix(k: int, u, length: float = 1.0) -> np.ndarray:
    """Rows of d/ds of all degree-k basis functions at normalized ``u``."""
    u = np.atleast_1d(np.asarray(u, dtype=float))
    if k == 0:
        return np.zeros((u.size, 1))
    lower = basis_matrix(k - 1, u)
    out = np.zeros((u.size, k + 1))
    out[:, :-1] -= lower
    out[:, 1:] += lower
    return out * (k / length)


# ---------------------------------------------------------------------------
# 1D linear operators on coefficient vectors


@lru_cache(maxsize=None)
def _elevation_matrix(k: int, k2: int) -> np.ndarray:
    out = np.zeros((k2 + 1, k + 1))
    r = k2 - k
    for i in range(k2 + 1):
        for j in range(max(0, i - r), min(k, i) + 1):
            out[i, j] = binomial(k, j) * binomial(r, i - j) / binomial(k2, i)
    out.setflags(write=False)
    return out


def elevation_matrix(k: int, k2: int) -> np.ndarray:
    """Matrix mapping degree-k coefficients to the same polynomial at degree k2."""
    if k2 < k:
        raise ShapeError(f"cannot elevate degree {k} down to {k2}")
    return _elevation_matrix(k, k2)


@lru_cache(maxsize=None)
def _derivative_operator(k: int) -> np.ndarray:
    # unit-length domain, result expressed at the same degree k
    if k == 0:
        return np.zeros((1, 1))
    lower = np.zeros((k, k + 1))
    for i in range(k):
        lower[i, i] = -k
        lower[i, i + 1] = k
    return _elevation_matrix(k - 1, k) @ lower


def differentiation_matrix(k: int, length: float = 1.0) -> np.ndarray:
    """Square differentiation matrix D for degree k on an interval of ``length``.

    For a control net P (rows indexed by the s degree) the s-derivative net is
    ``D.T @ P`` and the t-derivative net is ``P @ D``. Built as the
    degree-lowering derivative followed by elevation back to degree k.
    """
    return _derivative_operator(k).T / length


def _casteljau_split_matrices(k: int, lam: float):
    eye = np.eye(k + 1)
    rows = [eye]
    cur = eye
    for _ in range(k):
        cur = (1.0 - lam) * cur[:-1] + lam * cur[1:]
        rows.append(cur)
    left = np.array([r[0] for r in rows])
    right = np.array([rows[k - i][i] for i in range(k + 1)])
    return left, right


@lru_cache(maxsize=4096)
def restriction_matrix(k: int, a: float, b: float) -> np.ndarray:
    """Matrix mapping degree-k coefficients on [0, 1] to those of the piece on [a, b]."""
    if not 0.0 <= a < b <= 1.0:
        raise DomainError(f"invalid sub-interval [{a}, {b}]")
    out = np.eye(k + 1)
    if b < 1.0:
        out = _casteljau_split_matrices(k, b)[0] @ out
    if a > 0.0:
        out = _casteljau_split_matrices(k, a / b)[1] @ out
    out.setflags(write=False)
    return out


def _apply(mat_s, mat_t, net):
    """Compute mat_s @ net @ mat_t.T on the first two axes of ``net``."""
    out = np.tensordot(mat_s, net, axes=(1, 0))
    out = np.tensordot(mat_t, out, axes=(1, 1))
    return np.swapaxes(out, 0, 1)


def _casteljau_1d(coeffs, u):
    c = np.array(coeffs, dtype=float, copy=True)
    for _ in range(c.shape[0] - 1):
        c = (1.0 - u) * c[:-1] + u * c[1:]
    return c[0]


# ---------------------------------------------------------------------------
# curves and surfaces


@dataclass(frozen=True, eq=False)
class BernsteinCurve:
    """Univariate Bernstein polynomial on [offset, offset + length]."""

    coeffs: np.ndarray
    length: float = 1.0
    offset: float = 0.0

    def __post_init__(self):
        c = np.array(self.coeffs, dtype=float)
        if c.ndim not in (1, 2) or c.shape[0] < 1:
            raise ShapeError(f"bad coefficient shape {c.shape}")
        if not np.all(np.isfinite(c)):
            raise ShapeError("non-finite coefficients")
        if not self.length > 0:
            raise DomainError("curve length must be positive")
        c.setflags(write=False)
        object.__setattr__(self, "coeffs", c)

    @property
    def degree(self) -> int:
        return self.coeffs.shape[0] - 1

    def __call__(self, x):
        u = float(_check_param(x, self.length, self.offset))
        return _casteljau_1d(self.coeffs, u)

    def sample(self, x) -> np.ndarray:
        u = _check_param(x, self.length, self.offset)
        return np.tensordot(basis_matrix(self.degree, u), self.coeffs, axes=(1, 0))


@dataclass(frozen=True, eq=False)
class BernsteinSurface:
    """Bivariate tensor-product Bernstein surface.

    Parameters
    ----------
    net : array_like, shape (m+1, n+1) or (m+1, n+1, d)
        Control net; entry ``net[i, j]`` multiplies B_i^m(s) B_j^n(t).
    s_f, t_f : float
        Domain lengths along s and t.
    s0, t0 : float
        Domain offsets; non-zero only for pieces produced by :func:`split`.
    """

    net: np.ndarray
    s_f: float = 1.0
    t_f: float = 1.0
    s0: float = 0.0
    t0: float = 0.0

    def __post_init__(self):
        net = np.array(self.net, dtype=float)
        if net.ndim not in (2, 3) or net.shape[0] < 1 or net.shape[1] < 1:
            raise ShapeError(f"control net must be (m+1, n+1[, d]), got {net.shape}")
        if not np.all(np.isfinite(net)):
            raise ShapeError("control net contains non-finite entries")
        if not (self.s_f > 0 and self.t_f > 0):
            raise DomainError("domain lengths must be positive")
        net.setflags(write=False)
        object.__setattr__(self, "net", net)
        object.__setattr__(self, "s_f", float(self.s_f))
        object.__setattr__(self, "t_f", float(self.t_f))

    @property
    def m(self) -> int:
        return self.net.shape[0] - 1

    @property
    def n(self) -> int:
        return self.net.shape[1] - 1

    @property
    def dim(self) -> int:
        return 1 if self.net.ndim == 2 else self.net.shape[2]

    @property
    def is_scalar(self) -> bool:
        return self.net.ndim == 2

    def with_net(self, net) -> "BernsteinSurface":
        return BernsteinSurface(net, self.s_f, self.t_f, self.s0, self.t0)

    def component(self, k: int) -> "BernsteinSurface":
        return self.with_net(self.net[:, :, k])

    def __call__(self, s, t):
        return eval(self, s, t)

    def __add__(self, other):
        return add(self, other)

    def __sub__(self, other):
        return sub(self, other)

    def __mul__(self, other):
        if np.isscalar(other):
            return self.with_net(self.net * other)
        return multiply(self, other)

    __rmul__ = __mul__

    def __neg__(self):
        return self.with_net(-self.net)


def constant(value, m: int, n: int, s_f: float = 1.0, t_f: float = 1.0) -> BernsteinSurface:
    value = np.asarray(value, dtype=float)
    net = np.broadcast_to(value, (m + 1, n + 1) + value.shape).copy()
    return BernsteinSurface(net, s_f, t_f)


def stack(components) -> BernsteinSurface:
    """Combine scalar surfaces on a common domain into one vector surface."""
    components = list(components)
    first = components[0]
    for c in components[1:]:
        _require_same(first, c)
    return first.with_net(np.stack([c.net for c in components], axis=-1))


def _same_domain(f, g):
    return (
        math.isclose(f.s_f, g.s_f, rel_tol=1e-12)
        and math.isclose(f.t_f, g.t_f, rel_tol=1e-12)
        and math.isclose(f.s0, g.s0, abs_tol=1e-15)
        and math.isclose(f.t0, g.t0, abs_tol=1e-15)
    )


def _require_same(f, g):
    if not _same_domain(f, g):
        raise ShapeError("surfaces live on different domains")
    if (f.m, f.n) != (g.m, g.n):
        raise ShapeError(f"degree mismatch ({f.m}, {f.n}) vs ({g.m}, {g.n})")


def eval(f: BernsteinSurface, s: float, t: float):
    """Evaluate by tensor de Casteljau (s first, then t)."""
    u = float(_check_param(s, f.s_f, f.s0))
    w = float(_check_param(t, f.t_f, f.t0))
    col = _casteljau_1d(f.net, u)
    out = _casteljau_1d(col, w)
    return float(out) if f.is_scalar else out


def eval_direct(f: BernsteinSurface, s: float, t: float):
    """Evaluate by explicit double basis summation."""
    u = _check_param(s, f.s_f, f.s0)
    w = _check_param(t, f.t_f, f.t0)
    bs = basis_matrix(f.m, u)[0]
    bt = basis_matrix(f.n, w)[0]
    out = np.tensordot(np.tensordot(bs, f.net, axes=(0, 0)), bt, axes=(0, 0)) if f.is_scalar \
        else np.einsum("i,j,ijd->d", bs, bt, f.net)
    return float(out) if f.is_scalar else out


def eval_grid(f: BernsteinSurface, s, t) -> np.ndarray:
    """Values on the tensor grid ``s x t``; shape (len(s), len(t)[, d])."""
    bs = basis_matrix(f.m, _check_param(s, f.s_f, f.s0))
    bt = basis_matrix(f.n, _check_param(t, f.t_f, f.t0))
    return _apply(bs, bt, f.net)


def add(f: BernsteinSurface, g: BernsteinSurface) -> BernsteinSurface:
    _require_same(f, g)
    if f.net.shape != g.net.shape:
        raise ShapeError("value dimensions differ")
    return f.with_net(f.net + g.net)


def sub(f: BernsteinSurface, g: BernsteinSurface) -> BernsteinSurface:
    _require_same(f, g)
    if f.net.shape != g.net.shape:
        raise ShapeError("value dimensions differ")
    return f.with_net(f.net - g.net)


def _binom_row(k):
    return np.array([binomial(k, i) for i in range(k + 1)])


def multiply(g: BernsteinSurface, h: BernsteinSurface) -> BernsteinSurface:
    """Exact product; the result has degree (m + a, n + b)."""
    if not _same_domain(g, h):
        raise ShapeError("surfaces live on different domains")
    m, n, a, b = g.m, g.n, h.m, h.n
    cg = _binom_row(m)[:, None] * _binom_row(n)[None, :]
    ch = _binom_row(a)[:, None] * _binom_row(b)[None, :]
    gw = g.net * (cg if g.is_scalar else cg[..., None])
    hw = h.net * (ch if h.is_scalar else ch[..., None])
    trailing = np.broadcast_shapes(g.net.shape[2:], h.net.shape[2:])
    out = np.zeros((m + a + 1, n + b + 1) + trailing)
    for q in range(m + 1):
        for r in range(n + 1):
            gq = gw[q, r]
            out[q:q + a + 1, r:r + b + 1] += gq * hw
    cy = _binom_row(m + a)[:, None] * _binom_row(n + b)[None, :]
    out /= cy if not trailing else cy[..., None]
    return BernsteinSurface(out, g.s_f, g.t_f, g.s0, g.t0)


@lru_cache(maxsize=None)
def product_tensor(m: int, n: int, a: int, b: int) -> np.ndarray:
    """Bilinear product coefficients.

    Returns T with shape ((m+a+1)(n+b+1), (m+1)(n+1), (a+1)(b+1)) such that the
    flattened product net is ``einsum('eij,i,j->e', T, g.ravel(), h.ravel())``.
    """
    P, Q = m + a + 1, n + b + 1
    T = np.zeros((P, Q, m + 1, n + 1, a + 1, b + 1))
    for e in range(P):
        for f in range(Q):
            denom = binomial(m + a, e) * binomial(n + b, f)
            for q in range(max(0, e - a), min(m, e) + 1):
                for r in range(max(0, f - b), min(n, f) + 1):
                    T[e, f, q, r, e - q, f - r] = (
                        binomial(m, q) * binomial(n, r) * binomial(a, e - q) * binomial(b, f - r)
                    ) / denom
    T = T.reshape(P * Q, (m + 1) * (n + 1), (a + 1) * (b + 1))
    T.setflags(write=False)
    return T


def diff_s(f: BernsteinSurface) -> BernsteinSurface:
    D = differentiation_matrix(f.m, f.s_f)
    return f.with_net(_apply(D.T, np.eye(f.n + 1), f.net))


def diff_t(f: BernsteinSurface) -> BernsteinSurface:
    D = differentiation_matrix(f.n, f.t_f)
    return f.with_net(_apply(np.eye(f.m + 1), D.T, f.net))


def degree_elevate(f: BernsteinSurface, m2: int, n2: int) -> BernsteinSurface:
    if m2 < f.m or n2 < f.n:
        raise ShapeError(f"target degree ({m2}, {n2}) below ({f.m}, {f.n})")
    return f.with_net(_apply(elevation_matrix(f.m, m2), elevation_matrix(f.n, n2), f.net))


def elevate_to_common(f: BernsteinSurface, g: BernsteinSurface):
    m, n = max(f.m, g.m), max(f.n, g.n)
    return degree_elevate(f, m, n), degree_elevate(g, m, n)


def split(f: BernsteinSurface, axis: str, lam: float):
    """De Casteljau subdivision at fraction ``lam`` of the ``axis`` ('s' or 't') length."""
    if not 0.0 < lam < 1.0:
        raise DomainError(f"split fraction {lam} must lie in (0, 1)")
    if axis == "s":
        left, right = _casteljau_split_matrices(f.m, lam)
        eye = np.eye(f.n + 1)
        cut = lam * f.s_f
        return (
            BernsteinSurface(_apply(left, eye, f.net), cut, f.t_f, f.s0, f.t0),
            BernsteinSurface(_apply(right, eye, f.net), f.s_f - cut, f.t_f, f.s0 + cut, f.t0),
        )
    if axis == "t":
        left, right = _casteljau_split_matrices(f.n, lam)
        eye = np.eye(f.m + 1)
        cut = lam * f.t_f
        return (
            BernsteinSurface(_apply(eye, left, f.net), f.s_f, cut, f.s0, f.t0),
            BernsteinSurface(_apply(eye, right, f.net), f.s_f, f.t_f - cut, f.s0, f.t0 + cut),
        )
    raise DomainError(f"axis must be 's' or 't', got {axis!r}")


def coeff_bounds(f: BernsteinSurface) -> tuple[float, float]:
    if not f.is_scalar:
        raise ShapeError("coefficient bounds need a scalar surface")
    return float(f.net.min()), float(f.net.max())


def edge(f: BernsteinSurface, which: str) -> BernsteinCurve:
    """Boundary curve; ``which`` is one of 's=0', 's=s_f', 't=0', 't=t_f'."""
    if which == "s=0":
        return BernsteinCurve(f.net[0], f.t_f, f.t0)
    if which == "s=s_f":
        return BernsteinCurve(f.net[-1], f.t_f, f.t0)
    if which == "t=0":
        return BernsteinCurve(f.net[:, 0], f.s_f, f.s0)
    if which == "t=t_f":
        return BernsteinCurve(f.net[:, -1], f.s_f, f.s0)
    raise DomainError(f"unknown edge {which!r}")


class QuadratureWeights(NamedTuple):
    ws: np.ndarray
    wt: np.ndarray


def quadrature_weights(f: BernsteinSurface) -> QuadratureWeights:
    return QuadratureWeights(np.full(f.m + 1, f.s_f / (f.m + 1)), np.full(f.n + 1, f.t_f / (f.n + 1)))


def integrate(f: BernsteinSurface) -> float:
    """Exact integral over the domain: each basis product integrates to the weight."""
    if not f.is_scalar:
        raise ShapeError("integrate needs a scalar surface")
    ws, wt = quadrature_weights(f)
    return float(ws @ f.net @ wt)


def integrate_curve(c: BernsteinCurve):
    return c.length / (c.degree + 1) * c.coeffs.sum(axis=0)


def norm_sq(*components: BernsteinSurface) -> BernsteinSurface:
    """Sum of self-products of scalar component surfaces, at doubled degree."""
    if len(components) == 1 and not components[0].is_scalar:
        f = components[0]
        components = tuple(f.component(k) for k in range(f.dim))
    first = components[0]
    for c in components:
        if not c.is_scalar:
            raise ShapeError("norm_sq takes scalar component surfaces")
        _require_same(first, c)
    out = multiply(first, first)
    for c in components[1:]:
        out = add(out, multiply(c, c))
    return out
