import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from rodplan import bernstein as bz
from rodplan import cosserat as cs
from rodplan.errors import ShapeError, SingularityError

E1, E2, E3 = np.eye(3)
angles = st.floats(-np.pi, np.pi, allow_nan=False)


def fields_from_callables(m, n, s_f, t_f, funcs):
    """Exact Bernstein nets for fields affine in (s, t): interpolate on a corner net."""
    nets = []
    for fn in funcs:
        corners = np.array([[fn(s, t) for t in (0.0, t_f)] for s in (0.0, s_f)], dtype=float)
        nets.append(bz.degree_elevate(bz.BernsteinSurface(corners, s_f, t_f), m, n).net)
    return cs.RodFields.from_nets(nets, s_f, t_f)


def zero(s, t):
    return np.zeros(3)


def test_skew_examples(rng):
    assert np.array_equal(cs.skew(np.zeros(3)), np.zeros((3, 3)))
    assert np.allclose(cs.skew(E3) @ E1, E2)
    for _ in range(10):
        w, x = rng.normal(size=3), rng.normal(size=3)
        S = cs.skew(w)
        assert np.allclose(S + S.T, 0.0)
        assert np.allclose(S @ x, np.cross(w, x))
        assert np.allclose(cs.vee(S), w)


def test_rotation_examples():
    assert np.allclose(cs.rotation_from_euler(0.0, 0.0, 0.0), np.eye(3))
    assert np.allclose(cs.rotation_from_euler(0.0, np.pi / 2, 0.0) @ E1, -E3, atol=1e-15)


@given(angles, angles, angles)
def test_rotation_is_proper(phi, theta, psi):
    R = cs.rotation_from_euler(phi, theta, psi)
    assert np.abs(R.T @ R - np.eye(3)).max() <= 1e-12
    assert abs(np.linalg.det(R) - 1.0) <= 1e-12


def test_rotation_partials_match_fd(rng):
    a = rng.uniform(-1, 1, 3)
    _, dR = cs.rotation_partials(*a)
    h = 1e-6
    for q in range(3):
        e = np.zeros(3)
        e[q] = h
        fd = (cs.rotation_from_euler(*(a + e)) - cs.rotation_from_euler(*(a - e))) / (2 * h)
        assert np.allclose(dR[q], fd, atol=1e-9)


def test_euler_rate_examples():
    E = cs.euler_rate_map(0.0, 0.3)
    assert np.allclose(E @ [0.0, 0.7, 0.0], [0.0, 0.7, 0.0])
    E = cs.euler_rate_map(0.0, 0.0)
    assert np.allclose(E @ [0.0, 0.0, 1.3], [0.0, 0.0, 1.3])


def body_rate_fd(a, rates, h=1e-6):
    R = cs.rotation_from_euler(*a)
    dR = (cs.rotation_from_euler(*(a + h * rates)) - cs.rotation_from_euler(*(a - h * rates))) / (2 * h)
    return cs.vee(R.T @ dR)


@given(angles, st.floats(-1.47, 1.47), angles, st.lists(st.floats(-3, 3), min_size=3, max_size=3))
def test_euler_rate_matches_fd(phi, theta, psi, rates):
    rates = np.array(rates)
    E = cs.euler_rate_map(phi, theta)
    assert np.abs(E @ rates - body_rate_fd(np.array([phi, theta, psi]), rates)).max() <= 1e-6


def test_gimbal_lock_detected():
    with pytest.raises(SingularityError):
        cs.euler_rate_map(0.1, np.pi / 2)


def test_grid_validation():
    with pytest.raises(ShapeError):
        cs.CollocationGrid.uniform(6, 6, 0.24, 2.0, n_s=5)
    g = cs.CollocationGrid.uniform(6, 6, 0.24, 2.0)
    assert g.shape == (13, 13)
    assert g.s_nodes[0] == 0.0 and g.s_nodes[-1] == 0.24 and g.t_nodes[-1] == 2.0


def straight_rod(m=6, n=6, s_f=0.24, t_f=2.0):
    return fields_from_callables(m, n, s_f, t_f, [lambda s, t: s * E3, zero, lambda s, t: E3, zero, zero, zero])


def test_straight_rod_residuals_vanish():
    f = straight_rod()
    grid = cs.CollocationGrid.uniform(6, 6, f.s_f, f.t_f)
    res = cs.kinematic_residuals(f, grid)
    assert res.shape == (12 * 13 * 13,)
    assert np.abs(res).max() <= 1e-12


def test_rigid_translation_residuals_vanish():
    v0 = 0.3
    f = fields_from_callables(
        5, 4, 0.24, 1.5,
        [lambda s, t: s * E3 + t * v0 * E1, zero, lambda s, t: E3, zero, lambda s, t: v0 * E1, zero],
    )
    grid = cs.CollocationGrid.uniform(5, 4, 0.24, 1.5, n_s=7, n_t=9)
    res = cs.kinematic_residuals(f, grid)
    assert res.shape == (12 * 7 * 9,)
    assert np.abs(res).max() <= 1e-12


def test_constant_twist_screw_residuals_vanish():
    # psi = kappa s + w0 t about the rod axis, translating along it at speed c
    kappa, w0, c = 2.0, 0.8, 0.1
    f = fields_from_callables(
        6, 6, 0.24, 2.0,
        [
            lambda s, t: s * E3 + c * t * E3,
            lambda s, t: (kappa * s + w0 * t) * E3,
            lambda s, t: E3,
            lambda s, t: kappa * E3,
            lambda s, t: c * E3,
            lambda s, t: w0 * E3,
        ],
    )
    res = cs.kinematic_residuals(f, cs.CollocationGrid.uniform(6, 6, 0.24, 2.0))
    assert np.abs(res).max() <= 1e-12


def test_perturbing_strain_touches_only_position_equations():
    f = straight_rod()
    grid = cs.CollocationGrid.uniform(6, 6, f.s_f, f.t_f)
    base = cs.kinematic_residuals(f, grid).reshape(-1, 12)
    for delta in (1e-3, 1e-5):
        net = f.l.net.copy()
        net[3, 2, 0] += delta
        g = cs.RodFields(f.r, f.euler, f.l.with_net(net), f.h, f.v, f.omega)
        diff = cs.kinematic_residuals(g, grid).reshape(-1, 12) - base
        assert np.all(diff[:, 3:] == 0.0)
        assert 0 < np.abs(diff[:, 0]).max() <= delta
        assert np.all(diff[:, 1:3] == 0.0)


def random_fields(rng, m=3, n=2, s_f=0.5, t_f=1.7, scale=0.4):
    nets = [rng.uniform(-scale, scale, (m + 1, n + 1, 3)) for _ in range(6)]
    return cs.RodFields.from_nets(nets, s_f, t_f)


def test_residuals_match_pointwise_oracle(rng):
    f = random_fields(rng)
    grid = cs.CollocationGrid.uniform(f.m, f.n, f.s_f, f.t_f)
    res = cs.kinematic_residuals(f, grid).reshape(len(grid.s_nodes), len(grid.t_nodes), 12)
    rs, rt = bz.diff_s(f.r), bz.diff_t(f.r)
    es, et = bz.diff_s(f.euler), bz.diff_t(f.euler)
    for i, s in enumerate(grid.s_nodes):
        for j, t in enumerate(grid.t_nodes):
            a = bz.eval(f.euler, s, t)
            R = cs.rotation_from_euler(*a)
            # rotation residual via the matrix form: vee(R^T R_s) - h
            dR = (cs.rotation_from_euler(*(a + 1e-6 * bz.eval(es, s, t)))
                  - cs.rotation_from_euler(*(a - 1e-6 * bz.eval(es, s, t)))) / 2e-6
            expect = np.concatenate([
                bz.eval(rs, s, t) - R @ bz.eval(f.l, s, t),
                bz.eval(rt, s, t) - R @ bz.eval(f.v, s, t),
                cs.vee(R.T @ dR) - bz.eval(f.h, s, t),
            ])
            assert np.allclose(res[i, j, :9], expect, atol=1e-8)


def test_jacobian_matches_finite_differences(rng):
    f = random_fields(rng, m=2, n=2)
    op = cs.KinematicsOperator(2, 2, f.s_f, np.linspace(0, 1, 4), np.linspace(0, 1, 3))
    X = cs.stack_nets(f)
    res, J = op.residuals(X, f.t_f, jacobian=True)
    x = np.concatenate([X.ravel(), [f.t_f]])
    h = 1e-6
    fd = np.zeros_like(J)
    for k in range(x.size):
        e = np.zeros_like(x)
        e[k] = h
        hi, lo = x + e, x - e
        fd[:, k] = (op.residuals(hi[:-1].reshape(X.shape), hi[-1]) - op.residuals(lo[:-1].reshape(X.shape), lo[-1])) / (2 * h)
    assert np.allclose(J, fd, atol=1e-7)


def test_gimbal_lock_in_fields_reports_node():
    f = straight_rod(m=2, n=2)
    net = f.euler.net.copy()
    net[..., 1] = np.pi / 2
    g = cs.RodFields(f.r, f.euler.with_net(net), f.l, f.h, f.v, f.omega)
    with pytest.raises(SingularityError) as info:
        cs.kinematic_residuals(g, cs.CollocationGrid.uniform(2, 2, f.s_f, f.t_f))
    assert info.value.node is not None


def test_mismatched_fields_rejected():
    f = straight_rod(m=2, n=2)
    with pytest.raises(ShapeError):
        cs.RodFields(f.r, bz.degree_elevate(f.euler, 3, 2), f.l, f.h, f.v, f.omega)
