import itertools

import numpy as np
import pytest
from scipy.optimize import linprog

from rodplan import bernstein as bz
from rodplan import geometry as geo
from rodplan.errors import ShapeError

CUBE = np.array([[x, y, z] for x in (-0.5, 0.5) for y in (-0.5, 0.5) for z in (-0.5, 0.5)])


def subsets(k):
    for size in range(1, k + 1):
        yield from itertools.combinations(range(k), size)


def enumeration_distance(A, B):
    """Exact hull distance by trying every face pair (independent of GJK)."""
    best = np.inf
    for I in subsets(len(A)):
        for J in subsets(len(B)):
            # minimize |sum a_i A_i - sum b_j B_j| with sum a = sum b = 1
            P, Q = A[list(I)], B[list(J)]
            M = np.hstack([P.T, -Q.T])
            C = np.zeros((2, len(I) + len(J)))
            C[0, : len(I)] = 1
            C[1, len(I):] = 1
            K = np.block([[M.T @ M, C.T], [C, np.zeros((2, 2))]])
            rhs = np.concatenate([np.zeros(len(I) + len(J)), [1.0, 1.0]])
            sol, *_ = np.linalg.lstsq(K, rhs, rcond=None)
            w = sol[: len(I) + len(J)]
            if not np.allclose(K @ sol, rhs, atol=1e-9) or w.min() < -1e-12:
                continue
            best = min(best, float(np.linalg.norm(M @ w)))
    return best


def hulls_intersect(A, B):
    # feasibility LP: sum a_i A_i = sum b_j B_j, a, b in simplices
    n, k = len(A), len(B)
    Aeq = np.vstack([np.hstack([A.T, -B.T]), np.r_[np.ones(n), np.zeros(k)], np.r_[np.zeros(n), np.ones(k)]])
    beq = np.r_[np.zeros(3), 1.0, 1.0]
    return linprog(np.zeros(n + k), A_eq=Aeq, b_eq=beq, bounds=(0, None)).status == 0


def test_point_to_cube():
    assert geo.gjk_distance(np.array([[2.0, 0.0, 0.0]]), CUBE) == pytest.approx(1.5, abs=1e-12)
    assert geo.gjk_distance(geo.ConvexPolytope(CUBE), geo.ConvexPolytope(CUBE)) == 0.0


def test_box_box_analytic():
    other = CUBE * [1.0, 2.0, 0.5] + [3.0, 4.0, 0.2]
    # x gap 3 - 1 = 2, y gap 4 - 1 - 0.5 = 2.5, z overlaps
    assert geo.gjk_distance(CUBE, other) == pytest.approx(np.hypot(2.0, 2.5), abs=1e-9)


def test_empty_vertex_set():
    with pytest.raises(ShapeError):
        geo.gjk(np.zeros((0, 3)), CUBE)
    with pytest.raises(ShapeError):
        geo.ConvexPolytope(np.zeros((0, 3)))


def test_tetrahedra_against_enumeration(rng):
    for _ in range(60):
        A = rng.normal(size=(4, 3))
        B = rng.normal(size=(4, 3)) + rng.normal(scale=2.0, size=3)
        ref = 0.0 if hulls_intersect(A, B) else enumeration_distance(A, B)
        d = geo.gjk_distance(A, B)
        assert d == pytest.approx(ref, abs=1e-9)
        assert geo.gjk_distance(B, A) == pytest.approx(d, abs=1e-9)


def test_random_polytopes_against_sampling(rng):
    for _ in range(20):
        A = rng.normal(size=(rng.integers(1, 9), 3))
        B = rng.normal(size=(rng.integers(1, 9), 3)) + rng.normal(scale=3.0, size=3)
        d = geo.gjk_distance(A, B)
        wa = rng.dirichlet(np.ones(len(A)), 4000)
        wb = rng.dirichlet(np.ones(len(B)), 4000)
        sampled = np.linalg.norm(wa @ A - wb @ B, axis=1)
        # sampled points lie in the hulls: never closer than the true distance
        assert sampled.min() >= d - 1e-12
        ref = 0.0 if hulls_intersect(A, B) else enumeration_distance(A, B)
        assert d == pytest.approx(ref, abs=1e-9)


def test_gjk_closest_points_are_consistent(rng):
    A = rng.normal(size=(10, 3))
    B = rng.normal(size=(6, 3)) + [5.0, 0.0, 0.0]
    res = geo.gjk(A, B)
    assert np.allclose(res.weights_a @ A, res.point_a)
    assert res.weights_a.sum() == pytest.approx(1.0)
    assert np.linalg.norm(res.point_a - res.point_b) == pytest.approx(res.distance, abs=1e-9)


def test_distance_to_sphere_examples(rng):
    s = geo.SphereObstacle((0.0, 0.0, 0.0), 0.03)
    assert geo.distance_to_sphere(geo.ConvexPolytope(CUBE), s) == 0.0
    assert geo.distance_to_sphere(np.array([[0.07, 0.0, 0.0]]), s) == pytest.approx(0.04, abs=1e-15)
    for _ in range(10):
        A = rng.normal(size=(6, 3))
        sph = geo.SphereObstacle(tuple(rng.normal(scale=2.5, size=3)), rng.uniform(0.1, 1.0))
        pts = np.vstack([A, rng.dirichlet(np.full(6, 0.1), 50000) @ A])
        sampled = max(0.0, np.linalg.norm(pts - sph.center, axis=1).min() - sph.radius)
        d = geo.distance_to_sphere(A, sph)
        assert d <= sampled + 1e-12
        assert sampled - d <= 0.05
        exact = max(0.0, enumeration_distance(A, np.array([sph.center])) - sph.radius)
        assert d == pytest.approx(exact, abs=1e-9)


def test_sphere_validation():
    with pytest.raises(ShapeError):
        geo.SphereObstacle((0, 0, 0), 0.0)


def test_constant_surface_exact():
    f = bz.constant([0.3, -0.2, 1.0], 3, 3)
    f = f.with_net(f.net * [0.0, 0.0, 1.0])
    b = geo.surface_min_distance(f, geo.SphereObstacle((0, 0, 0), 0.5))
    assert b.lower == pytest.approx(0.5) and b.upper == pytest.approx(0.5)


def bent_surface():
    ctrl = np.array([[-1.0, 0.0, 0.0], [0.0, 2.0, 0.0], [1.0, 0.0, 0.0]])
    net = np.stack([ctrl + [0.0, 0.0, z] for z in (0.0, 1.0)], axis=1)
    return bz.BernsteinSurface(net, 1.0, 1.0)


def test_subdivision_separates_hull_from_obstacle():
    f = bent_surface()
    obs = geo.SphereObstacle((0.0, 1.6, 0.5), 0.05)
    assert geo.surface_min_distance(f, obs, geo.ClearanceQuery(max_depth=0)).lower == 0.0
    b1 = geo.surface_min_distance(f, obs, geo.ClearanceQuery(max_depth=1))
    assert b1.lower > 0.0
    # dense sampling: the curve peaks at y = 1, so the true clearance is 0.55
    vals = bz.eval_grid(f, np.linspace(0, 1, 401), np.linspace(0, 1, 5))
    true = np.linalg.norm(vals - [0.0, 1.6, 0.5], axis=-1).min() - 0.05
    assert true == pytest.approx(0.55, abs=1e-6)
    b8 = geo.surface_min_distance(f, obs, geo.ClearanceQuery(max_depth=8))
    assert b8.lower <= true + 1e-12 <= b8.upper + 2e-12
    assert b8.upper - b8.lower < 1e-3


def random_pair(rng):
    net = rng.uniform(-1, 1, (rng.integers(1, 7), rng.integers(1, 7), 3))
    f = bz.BernsteinSurface(net, rng.uniform(0.1, 1.0), rng.uniform(0.5, 3.0))
    if rng.random() < 0.7:
        obs = geo.SphereObstacle(tuple(rng.uniform(-1.2, 1.2, 3)), rng.uniform(0.05, 0.4))
    else:
        obs = geo.ConvexPolytope(rng.normal(scale=0.3, size=(6, 3)) + rng.uniform(-1.5, 1.5, 3))
    return f, obs


def sampled_min(f, obs, k=200):
    pts = bz.eval_grid(f, np.linspace(0, f.s_f, k), np.linspace(0, f.t_f, k)).reshape(-1, 3)
    if isinstance(obs, geo.SphereObstacle):
        return max(0.0, np.linalg.norm(pts - obs.center, axis=1).min() - obs.radius)
    return min(geo.gjk(p[None], obs.vertices).distance for p in pts[::97])


def test_soundness_and_monotonicity(rng):
    for _ in range(15):
        f, obs = random_pair(rng)
        prev = None
        for depth in range(0, 6):
            b = geo.surface_min_distance(f, obs, geo.ClearanceQuery(max_depth=depth))
            assert b.lower <= b.upper
            if prev is not None:
                assert b.lower >= prev.lower - 1e-12
                assert b.upper <= prev.upper + 1e-12
            prev = b
        assert sampled_min(f, obs) >= prev.lower - 1e-12


def test_uniform_clearance_matches_best_first_at_depth_zero(rng):
    for _ in range(10):
        f, obs = random_pair(rng)
        pc = geo.uniform_clearance(f.net, obs, depth=0)
        b = geo.surface_min_distance(f, obs, geo.ClearanceQuery(max_depth=0))
        assert max(0.0, pc.value) == pytest.approx(b.lower, abs=1e-9)


def test_uniform_clearance_gradient(rng):
    net = rng.uniform(-1, 1, (4, 3, 3))
    obs = geo.SphereObstacle((2.0, 0.3, -0.2), 0.2)
    pc = geo.uniform_clearance(net, obs, depth=1)
    h = 1e-7
    fd = np.zeros_like(net)
    for idx in np.ndindex(net.shape):
        e = np.zeros_like(net)
        e[idx] = h
        fd[idx] = (geo.uniform_clearance(net + e, obs, 1).value - geo.uniform_clearance(net - e, obs, 1).value) / (2 * h)
    assert np.allclose(pc.gradient, fd, atol=1e-5)


def test_uniform_clearance_is_sound(rng):
    for _ in range(10):
        f, obs = random_pair(rng)
        pc = geo.uniform_clearance(f.net, obs, depth=2)
        assert sampled_min(f, obs, 100) >= max(0.0, pc.value) - 1e-12
