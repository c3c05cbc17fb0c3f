"""The l1-product of ``k`` hyperbolic factors.

Array helpers take points as ``(..., k, d)`` space-coordinate arrays with one
curvature per factor.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from . import lorentz
from .lorentz import FactorPoint, GeometryError


@dataclass(frozen=True)
class ProductShape:
    k: int = 64
    d: int = 8

    def __post_init__(self):
        if int(self.k) != self.k or self.k < 1 or int(self.d) != self.d or self.d < 1:
            raise ValueError(f"k and d must be positive integers, got k={self.k}, d={self.d}")

    @property
    def total(self) -> int:
        return self.k * self.d


@dataclass(frozen=True, eq=False)
class ProductPoint:
    factors: tuple

    def __post_init__(self):
        factors = tuple(self.factors)
        if not factors:
            raise GeometryError("a product point needs at least one factor")
        dims = {f.dim for f in factors}
        if len(dims) != 1:
            raise GeometryError(f"factor dimensions differ: {sorted(dims)}")
        object.__setattr__(self, "factors", factors)

    @classmethod
    def from_array(cls, spaces, alphas=1.0) -> ProductPoint:
        spaces = np.asarray(spaces, dtype=float)
        alphas = np.broadcast_to(np.asarray(alphas, dtype=float), spaces.shape[:1])
        return cls(tuple(FactorPoint(s, a) for s, a in zip(spaces, alphas)))

    @classmethod
    def origin(cls, shape: ProductShape, alphas=1.0) -> ProductPoint:
        return cls.from_array(np.zeros((shape.k, shape.d)), alphas)

    @property
    def k(self) -> int:
        return len(self.factors)

    @property
    def d(self) -> int:
        return self.factors[0].dim

    @property
    def spaces(self) -> np.ndarray:
        return np.stack([f.space for f in self.factors])

    @property
    def alphas(self) -> np.ndarray:
        return np.array([f.alpha for f in self.factors])

    @property
    def factor_norms(self) -> np.ndarray:
        return lorentz.origin_distance(self.spaces, self.alphas)

    def __eq__(self, other):
        if not isinstance(other, ProductPoint):
            return NotImplemented
        return self.factors == other.factors

    def __len__(self):
        return len(self.factors)

    def __getitem__(self, i):
        return self.factors[i]


def factor_dists(X, Y, alphas):
    """Per-factor distances for ``(..., k, d)`` arrays; returns ``(..., k)``."""
    return lorentz.dist(X, Y, np.asarray(alphas, dtype=float))


def _check(X: ProductPoint, Y: ProductPoint) -> None:
    if X.k != Y.k or X.d != Y.d:
        raise GeometryError(f"shape mismatch: ({X.k}, {X.d}) vs ({Y.k}, {Y.d})")
    if not np.array_equal(X.alphas, Y.alphas):
        raise GeometryError("per-factor curvatures differ")


def _dists(X: ProductPoint, Y: ProductPoint) -> np.ndarray:
    _check(X, Y)
    return factor_dists(X.spaces, Y.spaces, X.alphas)


def l1_distance(X: ProductPoint, Y: ProductPoint) -> float:
    # sequential left-to-right sum keeps results bit-stable
    total = 0.0
    for v in _dists(X, Y):
        total += float(v)
    return total


def avg_distance(X: ProductPoint, Y: ProductPoint) -> float:
    return l1_distance(X, Y) / X.k


def l2_distance(X: ProductPoint, Y: ProductPoint) -> float:
    total = 0.0
    for v in _dists(X, Y):
        total += float(v) ** 2
    return float(np.sqrt(total))


def slice_and_lift(feature, shape: ProductShape, alphas: Sequence[float] | float = 1.0,
                   scale: float = 1.0) -> ProductPoint:
    """Scale a ``k*d`` feature vector, cut it into ``k`` segments, map each by exp0."""
    feature = np.asarray(feature, dtype=float).reshape(-1)
    if feature.shape[0] != shape.total:
        raise GeometryError(f"feature length {feature.shape[0]} != k*d = {shape.total}")
    if not scale > 0:
        raise GeometryError(f"scale must be positive, got {scale}")
    alphas = np.broadcast_to(np.asarray(alphas, dtype=float), (shape.k,))
    v = (scale * feature).reshape(shape.k, shape.d)
    return ProductPoint.from_array(lorentz.expmap0(v, alphas), alphas)
