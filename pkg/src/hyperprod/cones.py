"""Entailment cones inside one Lorentz factor.

A cone with apex ``y`` has half-aperture ``arcsin(min(1, 2K / (sqrt(alpha)|y|)))``
and contains ``x`` when the exterior angle at ``y`` between the axis (pointing
away from the base point) and the geodesic toward ``x`` is below it.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .lorentz import (
    FactorPoint,
    GeometryError,
    check_compatible,
    cosh_dist_minus_one,
    time_coord,
)

ARCCOS_CLAMP_TOL = 1e-9
DEFAULT_K = 0.1


@dataclass(frozen=True)
class ConeParams:
    K: float = DEFAULT_K

    def __post_init__(self):
        if not self.K > 0:
            raise ValueError(f"aperture constant K must be positive, got {self.K}")


def half_aperture_arr(y, alpha, K=DEFAULT_K):
    y = np.asarray(y, dtype=float)
    n = np.linalg.norm(y, axis=-1)
    with np.errstate(divide="ignore"):
        z = np.where(n > 0, 2.0 * K / (np.sqrt(alpha) * np.where(n > 0, n, 1.0)), np.inf)
    return np.arcsin(np.minimum(1.0, z))


def angle_cosine(x, y, alpha):
    """Cosine of the exterior angle; no validation, ``nan`` where undefined."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    x0 = time_coord(x, alpha)
    y0 = time_coord(y, alpha)
    t = np.maximum(cosh_dist_minus_one(x, y, alpha), 0.0)
    # x0 - y0 * (1 + t), with x0 - y0 formed without cancellation
    dt = (np.sum(x * x, axis=-1) - np.sum(y * y, axis=-1)) / (x0 + y0)
    num = dt - y0 * t
    den = np.linalg.norm(y, axis=-1) * np.sqrt(t * (t + 2.0))
    with np.errstate(divide="ignore", invalid="ignore"):
        return num / den


def exterior_angle_arr(x, y, alpha):
    return np.arccos(np.clip(angle_cosine(x, y, alpha), -1.0, 1.0))


def half_aperture(y: FactorPoint, params: ConeParams = ConeParams()) -> float:
    return float(half_aperture_arr(y.space, y.alpha, params.K))


def exterior_angle(x: FactorPoint, y: FactorPoint) -> float:
    check_compatible(x, y)
    if not np.any(y.space):
        raise GeometryError("exterior angle is undefined for an apex at the base point")
    if np.array_equal(x.space, y.space):
        raise GeometryError("exterior angle is undefined for x == y")
    u = float(angle_cosine(x.space, y.space, x.alpha))
    if not np.isfinite(u) or abs(u) > 1.0 + ARCCOS_CLAMP_TOL:
        raise GeometryError(f"arccos argument {u!r} outside [-1, 1]")
    return float(np.arccos(min(1.0, max(-1.0, u))))


def in_cone(x: FactorPoint, y: FactorPoint, params: ConeParams = ConeParams()) -> bool:
    return exterior_angle(x, y) < half_aperture(y, params)


# -- reverse-mode derivatives -------------------------------------------------

def half_aperture_vjp(y, alpha, gw, K=DEFAULT_K):
    """Gradient of ``sum(gw * half_aperture_arr(y))``; zero where the clamp is active."""
    y = np.asarray(y, dtype=float)
    alpha = np.asarray(alpha, dtype=float)
    n2 = np.sum(y * y, axis=-1)
    n = np.sqrt(n2)
    safe_n = np.where(n > 0, n, 1.0)
    z = 2.0 * K / (np.sqrt(alpha) * safe_n)
    active = (n > 0) & (z < 1.0)
    gz = np.where(active, gw / np.sqrt(np.where(active, 1.0 - z * z, 1.0)), 0.0)
    gy = (gz * -z / np.where(n > 0, n2, 1.0))[..., None] * y
    galpha = gz * (-z / (2.0 * alpha))
    return gy, galpha


def exterior_angle_vjp(x, y, alpha, gphi, clamp=ARCCOS_CLAMP_TOL):
    """Gradient of ``sum(gphi * exterior_angle_arr(x, y))``.

    The arccos argument is held ``clamp`` inside ``[-1, 1]``; entries where it
    is already outside, or where the angle is undefined, get zero gradient.
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    alpha = np.asarray(alpha, dtype=float)
    x0 = time_coord(x, alpha)
    y0 = time_coord(y, alpha)
    t = np.maximum(cosh_dist_minus_one(x, y, alpha), 0.0)
    m = 1.0 + t
    S2 = t * (t + 2.0)
    ny = np.linalg.norm(y, axis=-1)
    ok = (ny > 0) & (S2 > 0)
    S2s = np.where(ok, S2, 1.0)
    nys = np.where(ok, ny, 1.0)
    Dn = nys * np.sqrt(S2s)
    dt = (np.sum(x * x, axis=-1) - np.sum(y * y, axis=-1)) / (x0 + y0)
    u = (dt - y0 * t) / Dn
    ok &= np.abs(u) < 1.0
    uc = np.clip(u, -1.0 + clamp, 1.0 - clamp)
    gu = np.where(ok, -gphi / np.sqrt(1.0 - uc * uc), 0.0)
    du_dm = -y0 / Dn - u * m / S2s
    a_gu_dm = alpha * gu * du_dm
    gx = (gu / (Dn * x0))[..., None] * x + a_gu_dm[..., None] * ((y0 / x0)[..., None] * x - y)
    gy = (
        (-gu * m / (Dn * y0) - gu * u / (nys * nys))[..., None] * y
        + a_gu_dm[..., None] * ((x0 / y0)[..., None] * y - x)
    )
    dm_dalpha = m / alpha - (y0 / x0 + x0 / y0) / (2.0 * alpha)
    galpha = gu * (
        -1.0 / (Dn * 2.0 * alpha ** 2 * x0) + m / (Dn * 2.0 * alpha ** 2 * y0) + du_dm * dm_dalpha
    )
    return gx, gy, galpha
