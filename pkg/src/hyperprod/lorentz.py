"""Lorentz-model geometry for a single hyperbolic factor of curvature ``-alpha``.

Points are stored by their space coordinates only; the time coordinate is
recomputed from the hyperboloid constraint ``x0 = sqrt(1/alpha + |x|^2)`` so the
constraint cannot drift.

The array functions (``time_coord``, ``inner``, ``dist``, ``expmap0``,
``logmap0``) broadcast over leading axes and take the space coordinates on the
last axis.  :class:`FactorPoint` and the scalar operations built on it are the
validated public surface.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

# Tolerances; override by assigning module attributes.
HYPERBOLOID_TOL = 1e-9
ACOSH_CLAMP_TOL = 1e-9
SINHC_TAYLOR_BELOW = 1e-4


class GeometryError(ValueError):
    """Raised for invalid hyperbolic inputs (mismatched factors, bad domains)."""


def _as_alpha(alpha) -> np.ndarray:
    a = np.asarray(alpha, dtype=float)
    if np.any(~np.isfinite(a)) or np.any(a <= 0):
        raise GeometryError(f"curvature magnitude must be positive and finite, got {alpha!r}")
    return a


def time_coord(x, alpha):
    x = np.asarray(x, dtype=float)
    return np.sqrt(1.0 / alpha + np.sum(x * x, axis=-1))


def inner(x, y, alpha):
    """Minkowski inner product of the lifted points ``(x0, x)`` and ``(y0, y)``."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    return -time_coord(x, alpha) * time_coord(y, alpha) + np.sum(x * y, axis=-1)


def cosh_dist_minus_one(x, y, alpha):
    """``-alpha * <x, y> - 1`` as a sum of non-negative terms.

    Splits ``x0 y0 - <x, y>`` into a radial part, from the norms alone, and an
    angular part ``|x||y| |x/|x| - y/|y||^2 / 2``.  The radial part uses
    ``x0 - |x| = (1/alpha) / (x0 + |x|)``, so neither term cancels, even for
    points far from the base point.
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    alpha = np.asarray(alpha, dtype=float)
    nx = np.linalg.norm(x, axis=-1)
    ny = np.linalg.norm(y, axis=-1)
    x0 = np.sqrt(1.0 / alpha + nx * nx)
    y0 = np.sqrt(1.0 / alpha + ny * ny)
    ux = x / np.where(nx > 0, nx, 1.0)[..., None]
    uy = y / np.where(ny > 0, ny, 1.0)[..., None]
    du = ux - uy
    ang = nx * ny * np.sum(du * du, axis=-1)
    s = x0 + y0
    gap = (1.0 / alpha) * (1.0 / (x0 + nx) + 1.0 / (y0 + ny))  # (x0 - |x|) + (y0 - |y|)
    rad = (nx - ny) ** 2 * gap * (s + (nx + ny)) / (s * s)
    return 0.5 * alpha * (rad + ang)


def acosh1p(t):
    """``arccosh(1 + t)`` for ``t >= 0``, accurate near zero."""
    t = np.asarray(t, dtype=float)
    return np.log1p(t + np.sqrt(t * (t + 2.0)))


def dist(x, y, alpha):
    """Geodesic distance ``alpha^{-1/2} arccosh(-alpha <x, y>)``."""
    alpha = np.asarray(alpha, dtype=float)
    t = cosh_dist_minus_one(x, y, alpha)
    if np.any(t < -ACOSH_CLAMP_TOL):
        raise GeometryError(f"arccosh argument below 1 by {-np.min(t):.3e}")
    return acosh1p(np.maximum(t, 0.0)) / np.sqrt(alpha)


def sinhc(s):
    """``sinh(s) / s`` with the removable singularity at 0 handled by Taylor series."""
    s = np.asarray(s, dtype=float)
    small = np.abs(s) < SINHC_TAYLOR_BELOW
    safe = np.where(small, 1.0, s)
    s2 = s * s
    return np.where(small, 1.0 + s2 / 6.0 + s2 * s2 / 120.0, np.sinh(safe) / safe)


def expmap0(v, alpha):
    """Exponential map at the base point; returns space coordinates."""
    v = np.asarray(v, dtype=float)
    alpha = np.asarray(alpha, dtype=float)
    s = np.sqrt(alpha) * np.linalg.norm(v, axis=-1)
    return sinhc(s)[..., None] * v


def logmap0(x, alpha):
    """Inverse of :func:`expmap0`; returns the tangent vector at the base point."""
    x = np.asarray(x, dtype=float)
    alpha = np.asarray(alpha, dtype=float)
    sa = np.sqrt(alpha)
    n = np.linalg.norm(x, axis=-1)
    u = sa * n
    small = u < SINHC_TAYLOR_BELOW
    safe = np.where(small, 1.0, u)
    # arcsinh(u) / u
    ratio = np.where(small, 1.0 - u * u / 6.0, np.arcsinh(safe) / safe)
    return ratio[..., None] * x


def origin_distance(x, alpha):
    """Distance from the base point, i.e. the factor norm ``|x|_H``."""
    x = np.asarray(x, dtype=float)
    sa = np.sqrt(np.asarray(alpha, dtype=float))
    return np.arcsinh(sa * np.linalg.norm(x, axis=-1)) / sa


@dataclass(frozen=True, eq=False)
class FactorPoint:
    """A point on the upper sheet of the hyperboloid of curvature ``-alpha``."""

    space: np.ndarray
    alpha: float = 1.0

    def __post_init__(self):
        space = np.array(self.space, dtype=float).reshape(-1)
        if space.size == 0:
            raise GeometryError("factor dimension must be at least 1")
        if not np.all(np.isfinite(space)):
            raise GeometryError("space coordinates must be finite")
        _as_alpha(self.alpha)
        space.setflags(write=False)
        object.__setattr__(self, "space", space)
        object.__setattr__(self, "alpha", float(self.alpha))

    @classmethod
    def origin(cls, dim: int, alpha: float = 1.0) -> FactorPoint:
        return cls(np.zeros(dim), alpha)

    @property
    def dim(self) -> int:
        return self.space.shape[0]

    @property
    def time(self) -> float:
        return float(time_coord(self.space, self.alpha))

    @property
    def lifted(self) -> np.ndarray:
        """Full Minkowski coordinates ``(x0, x1, ..., xd)``."""
        return np.concatenate([[self.time], self.space])

    @property
    def norm(self) -> float:
        return float(origin_distance(self.space, self.alpha))

    def __eq__(self, other):
        if not isinstance(other, FactorPoint):
            return NotImplemented
        return self.alpha == other.alpha and np.array_equal(self.space, other.space)

    def __hash__(self):
        return hash((self.alpha, self.space.tobytes()))

    def __repr__(self):
        return f"FactorPoint(space={self.space.tolist()!r}, alpha={self.alpha!r})"


def lift(space, alpha: float = 1.0) -> FactorPoint:
    return FactorPoint(space, alpha)


def check_compatible(p: FactorPoint, q: FactorPoint) -> None:
    if p.dim != q.dim:
        raise GeometryError(f"dimension mismatch: {p.dim} vs {q.dim}")
    if p.alpha != q.alpha:
        raise GeometryError(f"curvature mismatch: {p.alpha} vs {q.alpha}")


def minkowski_inner(p: FactorPoint, q: FactorPoint) -> float:
    check_compatible(p, q)
    return float(inner(p.space, q.space, p.alpha))


def distance(p: FactorPoint, q: FactorPoint) -> float:
    check_compatible(p, q)
    return float(dist(p.space, q.space, p.alpha))


def exp0(v, alpha: float = 1.0) -> FactorPoint:
    v = np.asarray(v, dtype=float).reshape(-1)
    if not np.all(np.isfinite(v)):
        raise GeometryError("tangent vector must be finite")
    _as_alpha(alpha)
    return FactorPoint(expmap0(v, alpha), alpha)


def log0(p: FactorPoint) -> np.ndarray:
    return logmap0(p.space, p.alpha)


# -- reverse-mode derivatives -------------------------------------------------
#
# Each ``*_vjp`` returns the vector-Jacobian product for the matching forward
# function.  Curvature gradients come back per element (shape of the leading
# axes); callers reduce them over batch axes.


def _h_coeff(s):
    """``(s cosh s - sinh s) / s^3``, the derivative factor of ``sinhc``."""
    small = np.abs(s) < 1e-2
    safe = np.where(small, 1.0, s)
    s2 = s * s
    series = 1.0 / 3.0 + s2 / 30.0 + s2 * s2 / 840.0 + s2 * s2 * s2 / 45360.0
    exact = (safe * np.cosh(safe) - np.sinh(safe)) / safe ** 3
    return np.where(small, series, exact)


def expmap0_vjp(v, alpha, gx):
    """Gradient of ``<gx, expmap0(v, alpha)>`` with respect to ``v`` and ``alpha``."""
    v = np.asarray(v, dtype=float)
    alpha = np.asarray(alpha, dtype=float)
    r2 = np.sum(v * v, axis=-1)
    s = np.sqrt(alpha * r2)
    g = sinhc(s)
    h = _h_coeff(s)
    vg = np.sum(v * gx, axis=-1)
    gv = g[..., None] * gx + (alpha * h * vg)[..., None] * v
    galpha = 0.5 * h * r2 * vg
    return gv, galpha


def dist_vjp(x, y, alpha, gd, clamp=ACOSH_CLAMP_TOL):
    """Gradient of ``sum(gd * dist(x, y, alpha))`` w.r.t. ``x``, ``y``, ``alpha``.

    The arccosh argument is held at least ``clamp`` above 1 when differentiating.
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    alpha = np.asarray(alpha, dtype=float)
    x0 = time_coord(x, alpha)
    y0 = time_coord(y, alpha)
    t = np.maximum(cosh_dist_minus_one(x, y, alpha), 0.0)
    m = 1.0 + t
    sa = np.sqrt(alpha)
    d = acosh1p(t) / sa
    tc = np.maximum(t, clamp)
    gm = gd / (sa * np.sqrt(tc * (tc + 2.0)))
    gx = (gm * alpha)[..., None] * ((y0 / x0)[..., None] * x - y)
    gy = (gm * alpha)[..., None] * ((x0 / y0)[..., None] * y - x)
    dm_dalpha = m / alpha - (y0 / x0 + x0 / y0) / (2.0 * alpha)
    galpha = -gd * d / (2.0 * alpha) + gm * dm_dalpha
    return gx, gy, galpha
