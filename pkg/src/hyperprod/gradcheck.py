"""Central finite-difference checks of the analytic training gradient."""

from __future__ import annotations

import itertools
import math
import time
from dataclasses import dataclass, field

import numpy as np

from . import cones
from .learning import (ALPHA_MAX, ALPHA_MIN, ENTAIL_PAIRS, ROLES, Batch, EmbeddingTable, TrainScalars,
                       loss_gradient, overall_loss)
from .product import ProductShape

GRID_K = (1, 2, 8)
GRID_D = (2, 8)
GRID_ALPHA = (0.1, 1.0, 10.0)
KINK_MARGIN = 1e-3  # keep sampled points this far from hinge and aperture kinks


@dataclass
class CheckResult:
    k: int
    d: int
    alpha: float
    max_rel_error: float
    n_checked: int
    worst: str = ""


@dataclass
class SweepReport:
    results: list = field(default_factory=list)
    seconds: float = 0.0

    @property
    def max_rel_error(self) -> float:
        return max((r.max_rel_error for r in self.results), default=0.0)

    @property
    def n_configs(self) -> int:
        return len(self.results)

    def passed(self, tol: float = 1e-4) -> bool:
        return self.max_rel_error <= tol

    def to_dict(self) -> dict:
        return {"n_configs": self.n_configs, "max_rel_error": self.max_rel_error,
                "seconds": self.seconds,
                "configs": [vars(r) for r in self.results]}


def kink_margin(batch: Batch, table: EmbeddingTable, scalars: TrainScalars) -> float:
    """Smallest distance to a non-smooth point of the entailment terms.

    Covers the hinge ``phi = eta * omega`` and the aperture clamp ``arcsin(1)``.
    """
    a = scalars.alphas
    sp = {r: table.lift(getattr(batch, r), r, scalars) for r in ROLES}
    out = math.inf
    for x, y, eta in ENTAIL_PAIRS:
        X, Y = sp[x], sp[y]
        phi = cones.exterior_angle_arr(X, Y, a)
        omega = cones.half_aperture_arr(Y, a, scalars.K)
        z = 2.0 * scalars.K / (np.sqrt(a) * np.linalg.norm(Y, axis=-1))
        gaps = np.abs(np.concatenate([(phi - getattr(scalars, eta) * omega).ravel(), (z - 1.0).ravel()]))
        out = min(out, float(np.min(np.where(np.isnan(gaps), np.inf, gaps))))  # nan: undefined angle
    return out


def random_config(rng: np.random.Generator, k: int, d: int, alpha: float, batch_size: int | None = None,
                  width: int | None = None, margin: float = KINK_MARGIN):
    """A batch of distinct, non-empty entities over a fresh random table.

    Every entity gets its own tokens, so no two lifted points coincide and no
    cone apex sits at the origin (both are kinks of the objective).  Draws
    landing within ``margin`` of a hinge or clamp kink are redrawn, since a
    central difference straddling a kink measures neither one-sided slope.
    """
    while True:
        B = batch_size or int(rng.integers(2, 5))
        m = width or int(rng.integers(1, 3))
        n_tok = len(ROLES) * B * m
        shape = ProductShape(k, d)
        table = EmbeddingTable([f"t{i}" for i in range(n_tok)], shape, rng.normal(0, 1.0, (n_tok, shape.total)))
        perm = rng.permutation(n_tok).reshape(len(ROLES), B, m)
        batch = Batch(*perm)
        c = rng.uniform(0.1, 0.6, 2) / math.sqrt(shape.total)
        scalars = TrainScalars(np.full(k, math.log(alpha)), math.log(rng.uniform(0.05, 0.5)),
                               math.log(c[0]), math.log(c[1]), gamma=float(rng.uniform(0.1, 1.0)))
        if kink_margin(batch, table, scalars) >= margin:
            return batch, table, scalars


def check(batch: Batch, table: EmbeddingTable, scalars: TrainScalars, metric: str = "l1",
          h: float = 1e-5, threshold: float = 1e-6, max_coords: int | None = None,
          rng: np.random.Generator | None = None) -> tuple[float, int, str]:
    """Max relative error between analytic and central-difference gradients.

    Covers every free scalar and every table entry, or ``max_coords`` table
    entries drawn at random.  Log-alphas on a clamp bound only have one-sided
    derivatives and are skipped.
    """
    _, g = loss_gradient(batch, table, scalars, metric)
    worst, where, n = 0.0, "", 0

    W = table.weights
    coords = list(np.ndindex(W.shape))
    if max_coords is not None and len(coords) > max_coords:
        rng = rng or np.random.default_rng(0)
        coords = [coords[i] for i in np.sort(rng.choice(len(coords), max_coords, replace=False))]
    for idx in coords:
        a = g.table[idx]
        old = W[idx]
        W[idx] = old + h
        fp = overall_loss(batch, table, scalars, metric)
        W[idx] = old - h
        fm = overall_loss(batch, table, scalars, metric)
        W[idx] = old
        fd = (fp - fm) / (2 * h)
        if max(abs(a), abs(fd)) > threshold:
            n += 1
            err = abs(a - fd) / max(abs(a), abs(fd))
            if err > worst:
                worst, where = err, f"table{idx}"

    v = scalars.vector()
    la = scalars.log_alpha
    free = np.concatenate([[True, True, True],
                           (la > math.log(ALPHA_MIN)) & (la < math.log(ALPHA_MAX))])
    for i in np.flatnonzero(free):
        s = scalars.copy()
        vp = v.copy()
        vp[i] += h
        s.set_vector(vp)
        fp = overall_loss(batch, table, s, metric)
        vp[i] -= 2 * h
        s.set_vector(vp)
        fm = overall_loss(batch, table, s, metric)
        fd = (fp - fm) / (2 * h)
        a = g.scalars[i]
        if max(abs(a), abs(fd)) > threshold:
            n += 1
            err = abs(a - fd) / max(abs(a), abs(fd))
            if err > worst:
                worst, where = err, f"scalar[{i}]"
    return worst, n, where


def sweep(repeats: int = 6, seed: int = 0, metric: str = "l1", h: float = 1e-5,
          max_coords: int | None = 256) -> SweepReport:
    """``repeats`` random configurations for every (k, d, alpha) grid cell."""
    rng = np.random.default_rng(seed)
    out = SweepReport()
    t0 = time.perf_counter()
    for _ in range(repeats):
        for k, d, alpha in itertools.product(GRID_K, GRID_D, GRID_ALPHA):
            cfg = random_config(rng, k, d, alpha)
            err, n, where = check(*cfg, metric=metric, h=h, max_coords=max_coords, rng=rng)
            out.results.append(CheckResult(k, d, alpha, err, n, where))
    out.seconds = time.perf_counter() - t0
    return out
