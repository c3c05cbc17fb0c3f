"""Constructive tree embeddings into H^2 and metric diagnostics.

Sarkar-style placement: every node sits at the centre of its own tangent frame,
its incident edges leave at equally spaced angles, and each child is placed at
hyperbolic distance ``tau * edge_length`` along its edge.  Scaled trees reach
hyperbolic distances far beyond what float64 coordinates can represent, so
pairwise distances are computed intrinsically: walking the tree path from a
source node, the hyperbolic law of cosines is applied one edge at a time in the
log domain, carrying the direction back to the source in each node's frame.
Coordinates are still available through :meth:`TreeEmbedding.points`, computed
with mpmath and converted to float64 when representable.
"""

from __future__ import annotations

import itertools
import math
from collections import deque
from dataclasses import dataclass, field
from typing import Callable, Hashable, Mapping, Sequence

import mpmath
import numpy as np
from numba import njit
from scipy.optimize import minimize

from . import lorentz
from .combinatorics import MetricTree
from .lorentz import FactorPoint
from .product import ProductPoint

DEFAULT_NODE_CAP = 10_000
TAU_CAP = 2.0 ** 30
INJECTIVITY_TOL = 1e-12
DELTA_ROUNDOFF = 1e-12  # relative; four-point gaps below this count as 0


class EmbeddingError(RuntimeError):
    pass


@dataclass(frozen=True)
class EmbeddingQuality:
    lambda_: float
    additive_c: float = 0.0
    worst_pair: tuple | None = None


# -- distortion ---------------------------------------------------------------

def _pair_key(a, b):
    try:
        return (a, b) if a <= b else (b, a)
    except TypeError:
        return (a, b) if repr(a) <= repr(b) else (b, a)


def distortion_from_matrices(source: np.ndarray, target: np.ndarray, ids: Sequence) -> EmbeddingQuality:
    """Multiplicative distortion between two distance matrices over the same ids."""
    source = np.asarray(source, dtype=float)
    target = np.asarray(target, dtype=float)
    n = len(ids)
    if n < 2:
        raise ValueError("distortion needs at least two points")
    iu, ju = np.triu_indices(n, 1)
    ds, dt = source[iu, ju], target[iu, ju]
    bad = (dt < INJECTIVITY_TOL) & (ds > 0)
    if np.any(bad):
        i = int(np.flatnonzero(bad)[0])
        raise EmbeddingError(f"map is not injective: {ids[iu[i]]!r} and {ids[ju[i]]!r} coincide")
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio = dt / ds
        lam = np.where(ds > 0, np.maximum(ratio, 1.0 / ratio), 1.0)
    best = float(lam.max())
    ties = np.flatnonzero(lam == best)
    worst = _lexmin([_pair_key(ids[iu[i]], ids[ju[i]]) for i in ties])
    return EmbeddingQuality(max(best, 1.0), 0.0, worst)


def _lexmin(pairs):
    try:
        return min(pairs)
    except TypeError:
        return min(pairs, key=repr)


def measure_distortion(source: Callable, target: Callable, point_map: Mapping) -> EmbeddingQuality:
    """Distortion of ``point_map`` from metric ``source`` (on ids) to ``target`` (on images)."""
    ids = list(point_map)
    n = len(ids)
    S = np.zeros((n, n))
    T = np.zeros((n, n))
    for i in range(n):
        for j in range(i + 1, n):
            S[i, j] = S[j, i] = source(ids[i], ids[j])
            T[i, j] = T[j, i] = target(point_map[ids[i]], point_map[ids[j]])
    return distortion_from_matrices(S, T, ids)


# -- intrinsic hyperbolic trigonometry ---------------------------------------

def _log_cosh(x):
    x = np.abs(x)
    return x + np.log1p(np.exp(-2.0 * x)) - math.log(2.0)


def _one_minus_tanh(x):
    return 2.0 / (np.exp(2.0 * np.minimum(x, 350.0)) + 1.0)


def _wrap(a):
    return (a + np.pi) % (2.0 * np.pi) - np.pi


def third_side(D, e, beta):
    """Side opposite angle ``beta`` between sides ``D`` and ``e`` (curvature -1).

    ``cosh D' = cosh D cosh e (1 - tanh D tanh e cos beta)`` evaluated in logs.
    """
    cb = np.cos(beta)
    tD, te = np.tanh(D), np.tanh(e)
    one_minus_prod = _one_minus_tanh(D) + tD * _one_minus_tanh(e)
    P = np.where(cb > 0, 2.0 * np.sin(beta / 2.0) ** 2 + cb * one_minus_prod, 1.0 - tD * te * cb)
    L = _log_cosh(D) + _log_cosh(e) + np.log(P)
    L = np.maximum(L, 0.0)
    big = L > 20.0
    Lb = np.where(big, L, 0.0)
    Ls = np.where(big, 0.0, L)
    out_big = Lb + np.log1p(np.sqrt(-np.expm1(-2.0 * Lb)))
    out_small = lorentz.acosh1p(np.expm1(Ls))
    return np.where(big, out_big, out_small)


def far_angle(D, e, beta):
    """Angle at the end of side ``e`` in the triangle with sides ``D``, ``e`` at angle ``beta``."""
    sech_e = 2.0 * np.exp(-e) / (1.0 + np.exp(-2.0 * e))
    return np.arctan2(np.sin(beta) * sech_e, np.tanh(e) / np.tanh(D) - np.cos(beta))


class TreeEmbedding:
    """Placement of a metric tree in H^2 at scale ``tau``."""

    def __init__(self, tree: MetricTree, tau: float):
        self.tree = tree
        self.tau = float(tau)
        n = len(tree)
        idx = tree.index
        # direction[v][u]: angle at v of the edge toward neighbour u
        self.direction: dict = {}
        dirm = np.full((n, n), np.nan)
        for v in tree.nodes:
            kids = tree.children[v]
            if v == tree.root:
                angles = {c: 2.0 * np.pi * j / len(kids) for j, c in enumerate(kids)}
            else:
                step = 2.0 * np.pi / (len(kids) + 1)
                angles = {tree.parent[v]: np.pi}
                angles.update({c: _wrap(np.pi + step * (j + 1)) for j, c in enumerate(kids)})
            self.direction[v] = angles
            for u, a in angles.items():
                dirm[idx[v], idx[u]] = a
        self._dirm = dirm
        self._D = None

    @property
    def nodes(self) -> list:
        return self.tree.nodes

    def distance_matrix(self) -> np.ndarray:
        if self._D is None:
            self._D = self._intrinsic_distances()
        return self._D

    def distance(self, a, b) -> float:
        i, j = self.tree.index[a], self.tree.index[b]
        return float(self.distance_matrix()[i, j])

    def source_matrix(self) -> np.ndarray:
        """Scaled tree metric ``tau * d_T``."""
        return self.tau * self.tree.distance_matrix()

    def _path_tables(self):
        t = self.tree
        n = len(t)
        idx = t.index
        adj = [[idx[u] for u in t.neighbors(v)] for v in t.nodes]
        elen = np.zeros((n, n))
        for p, c, w in t.edges:
            elen[idx[p], idx[c]] = elen[idx[c], idx[p]] = w
        hop = np.zeros((n, n), dtype=np.int64)
        pred = np.full((n, n), -1, dtype=np.int64)
        for s in range(n):
            queue = deque([s])
            seen = np.zeros(n, dtype=bool)
            seen[s] = True
            while queue:
                v = queue.popleft()
                for u in adj[v]:
                    if not seen[u]:
                        seen[u] = True
                        hop[s, u] = hop[s, v] + 1
                        pred[s, u] = v
                        queue.append(u)
        return hop, pred, elen

    def _intrinsic_distances(self) -> np.ndarray:
        n = len(self.tree)
        D = np.zeros((n, n))
        if n == 1:
            return D
        hop, pred, elen = self._path_tables()
        back = np.zeros((n, n))  # back[a, w]: angle at w of the geodesic toward a
        a1, w1 = np.nonzero(hop == 1)
        D[a1, w1] = self.tau * elen[a1, w1]
        back[a1, w1] = self._dirm[w1, a1]
        for h in range(2, int(hop.max()) + 1):
            a, w = np.nonzero(hop == h)
            q = pred[a, w]
            signed = _wrap(back[a, q] - self._dirm[q, w])
            beta = np.abs(signed)
            e = self.tau * elen[q, w]
            Dq = D[a, q]
            D[a, w] = third_side(Dq, e, beta)
            gamma = far_angle(Dq, e, beta)
            back[a, w] = _wrap(self._dirm[w, q] - np.sign(signed) * gamma)
        # both orientations of each pair were walked; they agree to rounding
        return 0.5 * (D + D.T)

    def quality(self) -> EmbeddingQuality:
        if len(self.tree) < 2:
            return EmbeddingQuality(1.0, 0.0, None)
        return distortion_from_matrices(self.source_matrix(), self.distance_matrix(), self.nodes)

    def frames(self, dps: int | None = None) -> dict:
        """Lorentz isometries (3x3 mpmath matrices) carrying the origin frame to each node."""
        t = self.tree
        if dps is None:
            depth = max(t.root_dist.values()) * self.tau
            dps = 30 + int(2 * depth / math.log(10))
        with mpmath.workdps(dps):
            frames = {t.root: mpmath.eye(3)}
            for v in t.nodes[1:]:
                p = t.parent[v]
                th = mpmath.mpf(self.direction[p][v])
                e = mpmath.mpf(self.tau) * mpmath.mpf(t.length[v])
                R = mpmath.matrix([[1, 0, 0], [0, mpmath.cos(th), -mpmath.sin(th)],
                                   [0, mpmath.sin(th), mpmath.cos(th)]])
                T = mpmath.matrix([[mpmath.cosh(e), mpmath.sinh(e), 0],
                                   [mpmath.sinh(e), mpmath.cosh(e), 0], [0, 0, 1]])
                frames[v] = frames[p] * R * T
        return frames

    def points(self) -> dict:
        """Node id -> :class:`FactorPoint` in H^2 (curvature -1)."""
        out = {}
        for v, M in self.frames().items():
            xy = [float(M[1, 0]), float(M[2, 0])]
            if not all(np.isfinite(xy)):
                raise OverflowError(f"coordinates of {v!r} exceed float64 range at tau={self.tau:g}")
            out[v] = FactorPoint(np.array(xy), 1.0)
        return out


def max_turn_loss(tree: MetricTree) -> float:
    """Largest length lost when a path turns at a node, ``-2 log sin(theta/2)``."""
    loss = 0.0
    for v in tree.nodes:
        deg = len(tree.neighbors(v))
        if deg >= 2:
            loss = max(loss, -2.0 * math.log(math.sin(math.pi / deg)))
    return loss


def tau_estimate(tree: MetricTree, epsilon: float) -> float:
    if len(tree) < 2:
        return 1.0
    lmin = min(w for _, _, w in tree.edges)
    # +log 2 covers the sub-asymptotic regime of the turn-loss approximation
    loss = max_turn_loss(tree) + math.log(2.0)
    return max(1.0, (1.0 + epsilon) / epsilon * loss / lmin)


def sarkar_embed(tree: MetricTree, epsilon: float, node_cap: int = DEFAULT_NODE_CAP,
                 tau0: float | None = None) -> TreeEmbedding:
    """Embed ``tree`` into H^2 with distortion at most ``1 + epsilon``.

    ``tau`` starts at :func:`tau_estimate` (or ``tau0``) and doubles until the
    measured all-pairs distortion meets the target.
    """
    if not epsilon > 0:
        raise ValueError(f"epsilon must be positive, got {epsilon}")
    if len(tree) > node_cap:
        raise ValueError(f"tree has {len(tree)} nodes, above the cap of {node_cap}")
    tau = tau_estimate(tree, epsilon) if tau0 is None else float(tau0)
    while tau <= TAU_CAP:
        emb = TreeEmbedding(tree, tau)
        q = emb.quality()
        if q.lambda_ <= 1.0 + epsilon:
            emb.quality_ = q
            return emb
        tau *= 2.0
    raise EmbeddingError(f"no scale up to {TAU_CAP:g} reached distortion 1+{epsilon}")


# -- products of trees --------------------------------------------------------

class ProductTreeEmbedding:
    """Factor-wise Sarkar embeddings of trees into ``(H^2)^k``."""

    def __init__(self, factors: Sequence[TreeEmbedding]):
        self.factors = list(factors)
        self.ids = list(itertools.product(*(f.nodes for f in self.factors)))
        self._grid = np.array(
            list(itertools.product(*(range(len(f.nodes)) for f in self.factors))), dtype=np.int64
        ).reshape(len(self.ids), len(self.factors))

    @property
    def taus(self) -> list[float]:
        return [f.tau for f in self.factors]

    def _sum(self, mats) -> np.ndarray:
        g = self._grid
        out = np.zeros((len(self.ids), len(self.ids)))
        for i, M in enumerate(mats):
            out += M[np.ix_(g[:, i], g[:, i])]
        return out

    def distance_matrix(self) -> np.ndarray:
        return self._sum([f.distance_matrix() for f in self.factors])

    def source_matrix(self) -> np.ndarray:
        """l1-product of the per-factor scaled tree metrics."""
        return self._sum([f.source_matrix() for f in self.factors])

    def quality(self) -> EmbeddingQuality:
        return distortion_from_matrices(self.source_matrix(), self.distance_matrix(), self.ids)

    def points(self) -> dict:
        per = [f.points() for f in self.factors]
        return {tid: ProductPoint(tuple(p[v] for p, v in zip(per, tid))) for tid in self.ids}


def product_tree_embed(trees: Sequence[MetricTree], epsilon: float, **kw) -> ProductTreeEmbedding:
    if not trees:
        raise ValueError("need at least one tree")
    return ProductTreeEmbedding([sarkar_embed(t, epsilon, **kw) for t in trees])


# -- Gromov hyperbolicity -----------------------------------------------------

@njit(cache=True)
def _four_point_delta(D):
    n = D.shape[0]
    best = 0.0
    for x in range(n):
        for y in range(x + 1, n):
            dxy = D[x, y]
            for z in range(y + 1, n):
                dxz = D[x, z]
                dyz = D[y, z]
                for w in range(z + 1, n):
                    s1 = dxy + D[z, w]
                    s2 = dxz + D[y, w]
                    s3 = D[x, w] + dyz
                    # largest minus second largest
                    if s1 < s2:
                        s1, s2 = s2, s1
                    if s2 < s3:
                        s2, s3 = s3, s2
                        if s1 < s2:
                            s1, s2 = s2, s1
                    gap = 0.5 * (s1 - s2)
                    if gap > best:
                        best = gap
    return best


def gromov_delta(D) -> float:
    """Four-point hyperbolicity: max over quadruples of half the gap between the
    two largest of the three pair-sum matchings.  Brute force, O(n^4)."""
    D = np.ascontiguousarray(D, dtype=float)
    if D.ndim != 2 or D.shape[0] != D.shape[1]:
        raise ValueError("expected a square distance matrix")
    if D.shape[0] < 4:
        return 0.0
    delta = float(_four_point_delta(D))
    # pair sums of a tree metric agree only up to rounding of the path sums
    return 0.0 if delta <= DELTA_ROUNDOFF * float(np.max(np.abs(D))) else delta


def grid_metric(m: int) -> np.ndarray:
    """l1-product of two unit-edge paths restricted to the ``m x m`` grid."""
    i, j = np.divmod(np.arange(m * m), m)
    return np.abs(i[:, None] - i[None, :]) + np.abs(j[:, None] - j[None, :]).astype(float)


# -- four-point obstruction ---------------------------------------------------

@dataclass
class ObstructionReport:
    max_distance: float
    residuals: np.ndarray
    n_feasible: int
    n_starts: int
    points: dict = field(default_factory=dict)


def _obstruction_terms(params, dim, alpha):
    v = params.reshape(3, dim)
    pts = lorentz.expmap0(v, alpha)  # b, c, d ; a is the base point
    a = np.zeros(dim)
    b, c, d = pts
    pairs = [(a, b, 1.0), (b, c, 1.0), (a, d, 1.0), (d, c, 1.0), (a, c, 2.0)]
    return v, pts, pairs


def _obstruction_objective(params, dim, alpha, mu, margin):
    v, pts, pairs = _obstruction_terms(params, dim, alpha)
    b, c, d = pts
    g_pts = np.zeros_like(pts)
    # maximise d(b, d)
    obj = -float(lorentz.dist(b, d, alpha))
    gb, gd_, _ = lorentz.dist_vjp(b, d, alpha, -1.0)
    g_pts[0] += gb
    g_pts[2] += gd_
    slots = [(None, 0), (0, 1), (None, 2), (2, 1), (None, 1)]
    for (p, q, target), (ip, iq) in zip(pairs, slots):
        r = float(lorentz.dist(p, q, alpha)) - target
        excess = abs(r) - margin
        if excess > 0:
            obj += mu * excess ** 2
            gr = 2.0 * mu * excess * np.sign(r)
            gp, gq, _ = lorentz.dist_vjp(p, q, alpha, gr)
            if ip is not None:
                g_pts[ip] += gp
            g_pts[iq] += gq
    gv, _ = lorentz.expmap0_vjp(v, alpha, g_pts)
    return obj, gv.reshape(-1)


def midpoint_obstruction_witness(dim: int = 2, alpha: float = 1.0, starts: int = 20, tol: float = 1e-6,
                                 seed: int = 0, stages: int = 5, mu0: float = 1e6) -> ObstructionReport:
    """Largest ``d(b, d)`` over quadruples ``a, b, c, d`` in H^dim with
    ``d(a,b) = d(b,c) = d(a,d) = d(d,c) = 1`` and ``d(a,c) = 2`` to within ``tol``.

    The 4-cycle of the Hamming square needs ``d(b, d) = 2``; the search shows
    the constraints pin both ``b`` and ``d`` to the midpoint of ``[a, c]``.
    ``a`` is fixed at the base point (isometry invariance).
    """
    if dim < 2:
        raise ValueError("dimension must be at least 2")
    rng = np.random.default_rng(seed)
    best, best_res, n_ok = -np.inf, None, 0
    closest = (np.inf, None)
    best_pts = None
    for _ in range(starts):
        x = rng.normal(size=3 * dim)
        mu = mu0
        for _stage in range(stages):
            res = minimize(_obstruction_objective, x, args=(dim, alpha, mu, 0.25 * tol), jac=True,
                           method="L-BFGS-B", options={"maxiter": 2000, "ftol": 1e-15, "gtol": 1e-12})
            x = res.x
            mu *= 10.0
        _, pts, pairs = _obstruction_terms(x, dim, alpha)
        resid = np.array([float(lorentz.dist(p, q, alpha)) - t for p, q, t in pairs])
        worst = np.abs(resid).max()
        if worst < closest[0]:
            closest = (worst, resid)
        if worst <= tol:
            n_ok += 1
            val = float(lorentz.dist(pts[0], pts[2], alpha))
            if val > best:
                best, best_res = val, resid
                best_pts = {"a": np.zeros(dim), "b": pts[0], "c": pts[1], "d": pts[2]}
    if n_ok == 0:
        raise EmbeddingError(f"no start met the constraints; best residuals {closest[1]}")
    return ObstructionReport(best, best_res, n_ok, starts, best_pts)
