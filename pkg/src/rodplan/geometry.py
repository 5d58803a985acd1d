"""
Minimum distance between Bernstein surfaces and convex obstacles.

GJK works on vertex sets (the convex hull is implied). A position surface is
bounded by the hull of its control net, so the hull distance is a certified
lower bound on the surface-to-obstacle distance; subdividing the surface with
de Casteljau shrinks the hulls and tightens that bound, while surface corner
points give matching upper bounds.
"""

from __future__ import annotations

import heapq
import itertools
from dataclasses import dataclass
from typing import NamedTuple, Union

import numpy as np

from . import bernstein as bz
from .errors import ShapeError

GJK_TOL = 1e-10
GJK_MAX_ITER = 128


@dataclass(frozen=True, eq=False)
class ConvexPolytope:
    vertices: np.ndarray

    def __post_init__(self):
        v = np.atleast_2d(np.asarray(self.vertices, dtype=float))
        if v.size == 0 or v.shape[-1] != 3:
            raise ShapeError("polytope needs a nonempty (k, 3) vertex array")
        if not np.all(np.isfinite(v)):
            raise ShapeError("polytope vertices must be finite")
        object.__setattr__(self, "vertices", v)


@dataclass(frozen=True)
class SphereObstacle:
    center: tuple
    radius: float

    def __post_init__(self):
        c = tuple(float(x) for x in self.center)
        if len(c) != 3:
            raise ShapeError("sphere center must be a 3-vector")
        if not self.radius > 0:
            raise ShapeError("sphere radius must be positive")
        object.__setattr__(self, "center", c)
        object.__setattr__(self, "radius", float(self.radius))


Obstacle = Union[SphereObstacle, ConvexPolytope]


@dataclass(frozen=True)
class ClearanceQuery:
    epsilon: float = 0.005
    max_depth: int = 6

    def __post_init__(self):
        if self.epsilon < 0:
            raise ShapeError("epsilon must be nonnegative")
        if not 0 <= self.max_depth <= 12:
            raise ShapeError("max_depth must lie in [0, 12]")


class GJKResult(NamedTuple):
    distance: float
    point_a: np.ndarray
    point_b: np.ndarray
    weights_a: np.ndarray
    weights_b: np.ndarray
    iterations: int


def _project_simplex(points):
    """Closest point to the origin on the hull of up to four points.

    Returns (point, barycentric weights). Every face containing the newest
    point (last entry) is tried; the minimum-norm feasible projection wins.
    """
    k = len(points)
    P = np.asarray(points)
    best = None
    last = k - 1
    for size in range(1, k + 1):
        for rest in itertools.combinations(range(last), size - 1):
            idx = rest + (last,)
            Q = P[list(idx)]
            if size == 1:
                lam = np.ones(1)
            else:
                E = Q[1:] - Q[0]
                G = E @ E.T
                if abs(np.linalg.det(G)) <= 1e-14 * max(1.0, np.trace(G)) ** (size - 1):
                    continue
                mu = np.linalg.solve(G, -E @ Q[0])
                lam = np.concatenate(([1.0 - mu.sum()], mu))
                if lam.min() < -1e-12:
                    continue
                lam = np.clip(lam, 0.0, None)
                lam /= lam.sum()
            x = lam @ Q
            nx = x @ x
            if best is None or nx < best[0]:
                best = (nx, idx, lam, x)
    # the newest support point always appears in some face; this cannot be None
    _, idx, lam, x = best
    return x, idx, lam


def gjk(a, b, tol: float = GJK_TOL, max_iter: int = GJK_MAX_ITER) -> GJKResult:
    """Distance between the convex hulls of two vertex sets.

    The returned distance is the support-function lower bound at termination,
    so it never exceeds the true distance.
    """
    A = np.atleast_2d(np.asarray(a, dtype=float))
    B = np.atleast_2d(np.asarray(b, dtype=float))
    if A.size == 0 or B.size == 0:
        raise ShapeError("empty vertex set")
    if A.shape[1] != B.shape[1]:
        raise ShapeError("vertex dimensions differ")

    def support(d):
        i = int(np.argmax(A @ d))
        j = int(np.argmax(-(B @ d)))
        return i, j

    pairs = [(0, 0)]
    points = [A[0] - B[0]]
    lam = np.ones(1)
    v = points[0]
    lower = 0.0
    it = 0
    while it < max_iter:
        it += 1
        vv = float(v @ v)
        if vv <= 1e-30:
            lower = 0.0
            break
        i, j = support(-v)
        w = A[i] - B[j]
        vw = float(v @ w)
        lower = max(lower, vw / np.sqrt(vv))
        if vv - vw <= tol * vv or (i, j) in pairs:
            break
        pairs.append((i, j))
        points.append(w)
        v, idx, lam = _project_simplex(points)
        pairs = [pairs[k] for k in idx]
        points = [points[k] for k in idx]
        if len(points) == 4:
            # origin enclosed by a full tetrahedron
            v = np.zeros_like(v)
    else:
        vv = float(v @ v)
    wa = np.zeros(len(A))
    wb = np.zeros(len(B))
    for (i, j), l in zip(pairs, lam):
        wa[i] += l
        wb[j] += l
    dist = 0.0 if float(v @ v) <= 1e-30 else max(0.0, min(lower, float(np.sqrt(v @ v))))
    return GJKResult(dist, wa @ A, wb @ B, wa, wb, it)


def gjk_distance(a, b) -> float:
    va = a.vertices if isinstance(a, ConvexPolytope) else a
    vb = b.vertices if isinstance(b, ConvexPolytope) else b
    return gjk(va, vb).distance


def distance_to_sphere(a, sphere: SphereObstacle) -> float:
    va = a.vertices if isinstance(a, ConvexPolytope) else a
    return max(0.0, gjk(va, np.array([sphere.center])).distance - sphere.radius)


def point_distance(p, obstacle: Obstacle) -> float:
    """Exact distance from a point to an obstacle (zero inside)."""
    p = np.asarray(p, dtype=float)
    if isinstance(obstacle, SphereObstacle):
        return max(0.0, float(np.linalg.norm(p - obstacle.center)) - obstacle.radius)
    return gjk(p[None, :], obstacle.vertices).distance


def hull_distance(vertices, obstacle: Obstacle) -> float:
    if isinstance(obstacle, SphereObstacle):
        return distance_to_sphere(vertices, obstacle)
    return gjk(vertices, obstacle.vertices).distance


def _aabb_lower(vertices, obstacle):
    lo, hi = vertices.min(axis=0), vertices.max(axis=0)
    if isinstance(obstacle, SphereObstacle):
        c = np.asarray(obstacle.center)
        gap = np.maximum(0.0, np.maximum(lo - c, c - hi))
        return max(0.0, float(np.linalg.norm(gap)) - obstacle.radius)
    olo, ohi = obstacle.vertices.min(axis=0), obstacle.vertices.max(axis=0)
    gap = np.maximum(0.0, np.maximum(lo - ohi, olo - hi))
    return float(np.linalg.norm(gap))


class ClearanceBounds(NamedTuple):
    lower: float
    upper: float


def surface_min_distance(f: bz.BernsteinSurface, obstacle: Obstacle, q: ClearanceQuery = ClearanceQuery(),
                         tol: float = 1e-10) -> ClearanceBounds:
    """Certified bounds on min over (s, t) of the distance from f(s, t) to an obstacle.

    Best-first subdivision: the patch whose control hull is closest is split
    into four (both axes at the midpoint) until that patch reaches
    ``q.max_depth`` or the bounds agree to ``tol``.
    """
    if f.dim != 3 or f.is_scalar:
        raise ShapeError("surface_min_distance needs a 3-vector position surface")
    counter = itertools.count()

    def corners(piece):
        net = piece.net
        return min(point_distance(net[i, j], obstacle) for i in (0, -1) for j in (0, -1))

    def push(heap, piece, depth):
        verts = piece.net.reshape(-1, 3)
        heapq.heappush(heap, (hull_distance(verts, obstacle), next(counter), depth, piece))

    heap = []
    push(heap, f, 0)
    upper = corners(f)
    lower = heap[0][0]
    while heap:
        lower, _, depth, piece = heap[0]
        if depth >= q.max_depth or upper - lower <= tol:
            break
        heapq.heappop(heap)
        for half in bz.split(piece, "s", 0.5):
            for quarter in bz.split(half, "t", 0.5):
                upper = min(upper, corners(quarter))
                push(heap, quarter, depth + 1)
    return ClearanceBounds(float(min(lower, upper)), float(upper))


class PatchClearance(NamedTuple):
    value: float
    gradient: np.ndarray
    patch: tuple


def _patch_operators(m, n, depth):
    k = 2**depth
    cuts = np.linspace(0.0, 1.0, k + 1)
    ops_s = [bz.restriction_matrix(m, float(cuts[i]), float(cuts[i + 1])) for i in range(k)]
    ops_t = [bz.restriction_matrix(n, float(cuts[i]), float(cuts[i + 1])) for i in range(k)]
    return ops_s, ops_t


def uniform_clearance(net: np.ndarray, obstacle: Obstacle, depth: int = 2) -> PatchClearance:
    """Signed hull clearance over a uniform 2^depth x 2^depth patch grid, with gradient.

    ``value`` is min over patches of (hull distance to the obstacle's core minus
    the sphere radius); it equals the certified lower bound whenever it is
    positive. ``gradient`` has the shape of ``net`` and is the derivative
    through the active patch. When the active hull swallows the obstacle core
    the gradient pushes the patch centroid outward instead.
    """
    net = np.asarray(net, dtype=float)
    m, n = net.shape[0] - 1, net.shape[1] - 1
    ops_s, ops_t = _patch_operators(m, n, depth)
    if isinstance(obstacle, SphereObstacle):
        core = np.array([obstacle.center])
        radius = obstacle.radius
    else:
        core = obstacle.vertices
        radius = 0.0

    patches = []
    for a, Sa in enumerate(ops_s):
        for b, Sb in enumerate(ops_t):
            verts = bz._apply(Sa, Sb, net).reshape(-1, 3)
            lo, hi = verts.min(axis=0), verts.max(axis=0)
            clo, chi = core.min(axis=0), core.max(axis=0)
            gap = np.linalg.norm(np.maximum(0.0, np.maximum(lo - chi, clo - hi)))
            patches.append((gap, a, b, verts))
    patches.sort(key=lambda p: p[0])

    best = None
    for gap, a, b, verts in patches:
        if best is not None and gap >= best[0]:
            break
        res = gjk(verts, core)
        if best is None or res.distance < best[0]:
            best = (res.distance, a, b, verts, res)
    dist, a, b, verts, res = best
    if dist > 1e-12:
        direction = (res.point_a - res.point_b) / dist
        gv = res.weights_a[:, None] * direction[None, :]
    else:
        centroid = verts.mean(axis=0)
        away = centroid - core.mean(axis=0)
        norm = np.linalg.norm(away)
        away = away / norm if norm > 1e-15 else np.array([0.0, 0.0, 1.0])
        gv = np.tile(away / len(verts), (len(verts), 1))
    grad = bz._apply(ops_s[a].T, ops_t[b].T, gv.reshape(m + 1, n + 1, 3))
    return PatchClearance(dist - radius, grad, (a, b))
