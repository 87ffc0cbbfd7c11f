"""R-transform, S-transform, and branch-consistent logarithms.

Both transforms reduce to inverting an analytic map with a damped Newton
iteration started from the first-order Laurent expansion of the Stieltjes
transform at infinity, which places the iterate on the branch connected to
z -> infinity.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import (
    BranchJump,
    DivisionNearPole,
    NewtonDiverged,
    PoleCollision,
    ZeroFirstMoment,
    ZeroValue,
)
from .measure import MeasureLike, _support_weights, moment, stieltjes, stieltjes_deriv

_MAX_HALVINGS = 20


@dataclass(frozen=True)
class NewtonConfig:
    tol: float = 1e-12
    max_iter: int = 100
    damping: float = 1.0

    def __post_init__(self):
        if self.tol <= 0:
            raise ValueError("tol must be positive")
        if self.max_iter < 1:
            raise ValueError("max_iter must be >= 1")
        if not (0.0 < self.damping <= 1.0):
            raise ValueError("damping must lie in (0, 1]")


DEFAULT_NEWTON = NewtonConfig()


@dataclass(frozen=True, eq=False)
class Contour:
    """Ordered complex sample points where transforms are evaluated.

    Circle kinds carry their radius; the ray kind carries xi_max and the
    (negative) imaginary perturbation shared by all its points.
    """

    kind: str
    points: np.ndarray
    radius: float | None = None
    xi_max: float | None = None
    eps_imag: float | None = None

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=complex)
        if pts.size == 0:
            raise ValueError("contour needs at least one point")
        object.__setattr__(self, "points", pts)
        self.points.setflags(write=False)
        if self.kind in ("g_circle", "t_circle"):
            if self.radius is None or self.radius <= 0:
                raise ValueError("circle contour needs a positive radius")
            if np.abs(np.abs(pts) - self.radius).max() > 1e-14:
                raise ValueError("circle points must have |z| == radius")
        elif self.kind == "xi_ray":
            if self.eps_imag is None or self.eps_imag <= 0:
                raise ValueError("ray contour needs a positive eps_imag")
            if np.any(np.diff(pts.real) <= 0):
                raise ValueError("ray points must have strictly increasing real parts")
            if np.abs(pts.imag + self.eps_imag).max() > 1e-15 * (1 + self.eps_imag):
                raise ValueError("ray points must share imaginary part -eps_imag")
        else:
            raise ValueError(f"unknown contour kind {self.kind!r}")

    @property
    def n_z(self) -> int:
        return int(self.points.size)


def _circle_points(radius: float, n_z: int) -> np.ndarray:
    # half-offset angles keep the positive real axis out of the sample set
    theta = 2.0 * np.pi * (np.arange(n_z) + 0.5) / n_z
    return radius * np.exp(1j * theta)


def g_circle(radius: float, n_z: int = 64) -> Contour:
    """Circle of Stieltjes values g around the origin."""
    return Contour("g_circle", _circle_points(radius, n_z), radius=radius)


def t_circle(radius: float = 0.1, n_z: int = 64) -> Contour:
    """Circle of t = z*g - 1 values around the origin."""
    return Contour("t_circle", _circle_points(radius, n_z), radius=radius)


def xi_ray(xi_max: float, n_z: int = 64, eps_imag: float = 1e-6) -> Contour:
    """Equispaced frequencies on (0, xi_max], pushed below the real axis.

    The imaginary perturbation keeps characteristic functions off their
    zeros so logarithms are safe.
    """
    if xi_max <= 0:
        raise ValueError("xi_max must be positive")
    pts = xi_max * (np.arange(1, n_z + 1) / n_z) - 1j * eps_imag
    return Contour("xi_ray", pts, xi_max=xi_max, eps_imag=eps_imag)


# ---------------------------------------------------------------------------
# Newton inversions
# ---------------------------------------------------------------------------


def _damped_newton(z0: complex, residual, slope, cfg: NewtonConfig):
    """Shared guarded iteration; returns (z, iterations).

    ``residual(z) = target - F(z)`` is driven to 0 and ``slope(z) = F'(z)``,
    so the undamped update is z + residual/slope. The step is damped by
    halving whenever |residual| would grow.
    """
    try:
        z = complex(z0)
        r = residual(z)
        r0 = abs(r)
        for it in range(1, cfg.max_iter + 1):
            if abs(r) <= cfg.tol:
                return z, it - 1
            d = slope(z)
            if d == 0:
                raise NewtonDiverged(f"zero derivative at iterate {z!r}")
            step = r / d
            lam = cfg.damping
            for _ in range(_MAX_HALVINGS + 1):
                z_new = z + lam * step
                r_new = residual(z_new)
                if abs(r_new) < abs(r):
                    break
                lam *= 0.5
            else:
                raise NewtonDiverged(
                    f"no residual decrease after {_MAX_HALVINGS} halvings at {z!r}"
                )
            z, r = z_new, r_new
            if abs(r) > 10.0 * max(r0, cfg.tol):
                raise NewtonDiverged(f"residual grew from {r0:.3e} to {abs(r):.3e}")
        if abs(r) <= cfg.tol:
            return z, cfg.max_iter
        raise NewtonDiverged(f"residual {abs(r):.3e} > tol after {cfg.max_iter} iterations")
    except DivisionNearPole as exc:
        raise PoleCollision(str(exc)) from exc


def invert_stieltjes(m: MeasureLike, g: complex, cfg: NewtonConfig = DEFAULT_NEWTON) -> complex:
    """Solve g_mu(z) = g on the branch with z*g -> 1 as g -> 0."""
    z, _ = _invert_stieltjes_info(m, g, cfg)
    return z


def _invert_stieltjes_info(m, g, cfg):
    g = complex(g)
    if g == 0:
        raise ValueError("g must be nonzero")
    z0 = 1.0 / g + moment(m, 1)
    return _damped_newton(
        z0,
        residual=lambda z: g - stieltjes(m, z),
        slope=lambda z: stieltjes_deriv(m, z),
        cfg=cfg,
    )


def r_transform(m: MeasureLike, g: complex, cfg: NewtonConfig = DEFAULT_NEWTON) -> complex:
    """r(g) = z_mu(g) - 1/g; additive free convolution adds these."""
    return invert_stieltjes(m, g, cfg) - 1.0 / complex(g)


def invert_zg(m: MeasureLike, t: complex, cfg: NewtonConfig = DEFAULT_NEWTON) -> complex:
    """Solve z * g_mu(z) = t + 1 on the branch with z -> inf as t -> 0."""
    z, _ = _invert_zg_info(m, t, cfg)
    return z


def _invert_zg_info(m, t, cfg):
    t = complex(t)
    if t == 0:
        raise ValueError("t must be nonzero")
    m1 = moment(m, 1)
    lam, _ = _support_weights(m)
    if abs(m1) < 1e-12 * (1.0 + np.abs(lam).max()):
        raise ZeroFirstMoment("z*g inversion start point m1/t undefined for m1 = 0")
    z0 = m1 / t
    return _damped_newton(
        z0,
        residual=lambda z: (t + 1.0) - z * stieltjes(m, z),
        slope=lambda z: stieltjes(m, z) + z * stieltjes_deriv(m, z),
        cfg=cfg,
    )


def s_transform(m: MeasureLike, t: complex, cfg: NewtonConfig = DEFAULT_NEWTON) -> complex:
    """s(t) = (t+1) / (t * z); multiplicative free convolution multiplies these."""
    t = complex(t)
    z = invert_zg(m, t, cfg)
    return (t + 1.0) / (t * z)


# ---------------------------------------------------------------------------
# Branch-consistent logarithm
# ---------------------------------------------------------------------------


def log_branch_track(values: Sequence[complex]) -> np.ndarray:
    """Logarithms continuous along an ordered sequence of nonzero values.

    The first entry takes the principal branch; each later imaginary part
    follows its predecessor by the wrapped phase increment, which must stay
    strictly below pi in magnitude.
    """
    v = np.asarray(values, dtype=complex)
    if v.size == 0:
        return np.zeros(0, dtype=complex)
    if np.any(v == 0):
        raise ZeroValue("cannot take log of 0")
    args = np.angle(v)
    phases = np.empty(v.size)
    phases[0] = args[0]
    for k in range(1, v.size):
        delta = math.remainder(args[k] - args[k - 1], 2.0 * math.pi)
        if abs(delta) >= math.pi * (1.0 - 1e-9):
            raise BranchJump(
                f"phase gap {abs(delta):.6f} rad between entries {k-1} and {k}"
            )
        phases[k] = phases[k - 1] + delta
    return np.log(np.abs(v)) + 1j * phases
