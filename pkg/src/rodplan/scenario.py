"""
Formation curves and planning scenarios.

A formation maps the rod parameter s in [0, s_f] to a 3D position and an
attitude. Non-polynomial curves (ellipse, helix) are traversed at uniform
arc-length speed so that a formation of arc length L spread over [0, s_f]
has constant translational strain L / s_f.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Callable, Optional, Sequence, Union

import numpy as np

from . import bernstein as bz
from .errors import ValidationError
from .geometry import ConvexPolytope, SphereObstacle

_ARC_SAMPLES = 20001


def _unit(v):
    v = np.asarray(v, dtype=float)
    return v / np.linalg.norm(v)


class _ArcLengthCurve:
    """Mixin: evaluate a parametric curve at uniform arc length."""

    def _raw(self, tau):  # pragma: no cover - abstract
        raise NotImplementedError

    def _tau_range(self):  # pragma: no cover - abstract
        raise NotImplementedError

    def _table(self):
        if not hasattr(self, "_cache"):
            lo, hi = self._tau_range()
            tau = np.linspace(lo, hi, _ARC_SAMPLES)
            pts = self._raw(tau)
            seg = np.linalg.norm(np.diff(pts, axis=0), axis=1)
            object.__setattr__(self, "_cache", (tau, np.concatenate([[0.0], np.cumsum(seg)])))
        return self._cache

    @property
    def arc_length(self) -> float:
        return float(self._table()[1][-1])

    def points(self, u) -> np.ndarray:
        """Positions at normalized arc length u in [0, 1]."""
        tau, arc = self._table()
        return self._raw(np.interp(np.asarray(u, dtype=float) * arc[-1], arc, tau))


@dataclass(frozen=True)
class Line:
    """Straight formation start + s * direction (direction length is the strain)."""

    start: tuple = (0.0, 0.0, 0.0)
    direction: tuple = (0.0, 0.0, 1.0)
    attitude: tuple = (0.0, 0.0, 0.0)
    kind: str = field(default="line", init=False)

    def positions(self, s, s_f) -> np.ndarray:
        s = np.atleast_1d(np.asarray(s, dtype=float))
        return np.asarray(self.start)[None, :] + s[:, None] * np.asarray(self.direction)[None, :]

    def bernstein_coeffs(self, m, s_f) -> np.ndarray:
        ends = self.positions([0.0, s_f], s_f)
        return bz.elevation_matrix(1, m) @ ends


@dataclass(frozen=True)
class Ellipse(_ArcLengthCurve):
    """Arc of center + a cos(q) axis1 + b sin(q) axis2 for q over ``param_range``."""

    center: tuple
    semi_axes: tuple
    axis1: tuple
    axis2: tuple
    param_range: tuple = (0.0, np.pi / 2)
    attitude: tuple = (0.0, 0.0, 0.0)
    kind: str = field(default="ellipse", init=False)

    def _tau_range(self):
        return self.param_range

    def _raw(self, q):
        q = np.asarray(q, dtype=float)[:, None]
        a, b = self.semi_axes
        return (np.asarray(self.center)[None, :] + a * np.cos(q) * _unit(self.axis1)[None, :]
                + b * np.sin(q) * _unit(self.axis2)[None, :])

    def positions(self, s, s_f):
        return self.points(np.atleast_1d(s) / s_f)

    def bernstein_coeffs(self, m, s_f):
        return interpolate_curve(self, m, s_f)


@dataclass(frozen=True)
class Helix(_ArcLengthCurve):
    """Circular helix about ``axis`` through ``origin``.

    ``pitch`` is the rise per turn and ``slope`` the helix angle; they must
    satisfy tan(slope) = pitch / (2 pi radius). The arc traversed has length
    ``arc`` (default: the rod length, i.e. unit strain).
    """

    radius: float
    pitch: float
    slope: Optional[float] = None
    origin: tuple = (0.0, 0.0, 0.0)
    axis: tuple = (0.0, 0.0, 1.0)
    phase: float = 0.0
    arc: Optional[float] = None
    attitude: tuple = (0.0, 0.0, 0.0)
    kind: str = field(default="helix", init=False)

    def __post_init__(self):
        if self.slope is not None:
            implied = np.arctan2(self.pitch, 2 * np.pi * self.radius)
            if abs(implied - self.slope) > 1e-3:
                raise ValidationError(
                    f"helix slope {self.slope} inconsistent with pitch/radius (implies {implied:.6f})")

    def _frame(self):
        a3 = _unit(self.axis)
        helper = np.array([1.0, 0.0, 0.0]) if abs(a3[0]) < 0.9 else np.array([0.0, 1.0, 0.0])
        a1 = _unit(helper - (helper @ a3) * a3)
        return a1, np.cross(a3, a1), a3

    def _tau_range(self):
        length = 1.0 if self.arc is None else self.arc
        per_rad = np.hypot(self.radius, self.pitch / (2 * np.pi))
        return (self.phase, self.phase + length / per_rad)

    def _raw(self, tau):
        tau = np.asarray(tau, dtype=float)[:, None]
        a1, a2, a3 = self._frame()
        rise = self.pitch / (2 * np.pi) * (tau - self.phase)
        return (np.asarray(self.origin)[None, :] + self.radius * (np.cos(tau) * a1 + np.sin(tau) * a2)
                + rise * a3)

    def positions(self, s, s_f):
        if self.arc is None:
            return replace(self, arc=s_f).positions(s, s_f)
        return self.points(np.atleast_1d(s) / s_f)

    def bernstein_coeffs(self, m, s_f):
        return interpolate_curve(self, m, s_f)


@dataclass(frozen=True)
class SampledCurve:
    """Formation given by points at uniformly spaced s, linearly interpolated."""

    samples: tuple
    attitude: tuple = (0.0, 0.0, 0.0)
    kind: str = field(default="points", init=False)

    def positions(self, s, s_f):
        pts = np.asarray(self.samples, dtype=float)
        grid = np.linspace(0.0, s_f, len(pts))
        s = np.atleast_1d(np.asarray(s, dtype=float))
        return np.stack([np.interp(s, grid, pts[:, k]) for k in range(3)], axis=1)

    def bernstein_coeffs(self, m, s_f):
        return interpolate_curve(self, m, s_f)


Formation = Union[Line, Ellipse, Helix, SampledCurve]


def interpolate_curve(curve, m, s_f) -> np.ndarray:
    """Degree-m Bernstein coefficients interpolating the curve at m+1 uniform s nodes."""
    u = np.linspace(0.0, 1.0, m + 1)
    return np.linalg.solve(bz.basis_matrix(m, u), curve.positions(u * s_f, s_f))


@dataclass(frozen=True)
class Bounds:
    nu_min: float = 0.7
    nu_max: float = 2.25
    mu_max: float = 1.55
    v_max: float = 0.35
    omega_max: float = 2.5


@dataclass
class Scenario:
    """Everything needed to transcribe one planning problem.

    ``t_f`` is either a fixed float or a (min, max) pair, in which case the
    final time is a decision variable started from ``t_f_guess``.
    """

    name: str
    initial_formation: Formation
    final_formation: Optional[Formation]
    s_f: float = 0.24
    t_f: Union[float, tuple] = (0.5, 10.0)
    t_f_guess: Optional[float] = None
    m: int = 6
    n: int = 6
    bounds: Bounds = field(default_factory=Bounds)
    obstacles: Sequence[Union[SphereObstacle, ConvexPolytope]] = ()
    epsilon: float = 0.005
    cost: str = "leader"
    running_cost: Optional[Callable] = None
    time_weight: float = 0.0
    rest_start: bool = True
    rest_end: bool = False
    final_hard: bool = True
    n_v: int = 10
    collocation: Optional[tuple] = None
    obstacle_depth: int = 2

    @property
    def t_f_free(self) -> bool:
        return not np.isscalar(self.t_f)

    @property
    def t_f_range(self) -> tuple:
        if self.t_f_free:
            return float(self.t_f[0]), float(self.t_f[1])
        return float(self.t_f), float(self.t_f)

    def validate(self) -> None:
        errors = []
        b = self.bounds
        if not b.nu_min < b.nu_max:
            errors.append(f"nu_min ({b.nu_min}) must be below nu_max ({b.nu_max})")
        for name in ("nu_min", "nu_max", "mu_max", "v_max", "omega_max"):
            if not getattr(b, name) > 0:
                errors.append(f"bound {name} must be positive")
        if not self.s_f > 0:
            errors.append("s_f must be positive")
        lo, hi = self.t_f_range
        if not 0 < lo <= hi:
            errors.append(f"t_f range ({lo}, {hi}) invalid")
        if self.t_f_guess is not None and not lo <= self.t_f_guess <= hi:
            errors.append("t_f_guess outside the t_f range")
        if self.m < 1 or self.n < 1:
            errors.append("orders m, n must be at least 1")
        if self.epsilon < 0:
            errors.append("epsilon must be nonnegative")
        if self.cost not in ("leader", "general"):
            errors.append(f"unknown cost {self.cost!r}")
        if self.cost == "general" and self.running_cost is None:
            errors.append("general cost needs a running_cost callable")
        if self.cost == "leader" and self.final_formation is None:
            errors.append("leader cost needs a final formation for its targets")
        if self.n_v < 1:
            errors.append("n_v must be at least 1")
        if not 0 <= self.obstacle_depth <= 6:
            errors.append("obstacle_depth must lie in [0, 6]")
        if errors:
            raise ValidationError(errors)
