"""Retrieval, hierarchy and structure metrics for trained product-space embeddings."""

from __future__ import annotations

import csv
import json
from dataclasses import asdict, dataclass, field
from typing import Iterable, Mapping, Sequence

import numpy as np

from . import cones, lorentz
from .combinatorics import MetricTree
from .product import ProductPoint

_EPS = 1e-12


def _stack(X) -> np.ndarray:
    if isinstance(X, ProductPoint):
        return X.spaces[None]
    if len(X) and isinstance(X[0], ProductPoint):
        return np.stack([p.spaces for p in X])
    return np.asarray(X, dtype=float)


def product_distances(Q, C, alphas=1.0, metric: str = "l1") -> np.ndarray:
    """``(nq, nc)`` product distances; ``l1`` is the factor average, ``l2`` the scaled root-sum-square."""
    Q, C = _stack(Q), _stack(C)
    alphas = np.broadcast_to(np.asarray(alphas, dtype=float), Q.shape[1:2])
    out = np.empty((Q.shape[0], C.shape[0]))
    for i in range(Q.shape[0]):
        d = lorentz.dist(Q[i][None], C, alphas)
        out[i] = np.mean(d, axis=-1) if metric == "l1" else np.sqrt(np.mean(d * d, axis=-1))
    return out


# -- retrieval ----------------------------------------------------------------

def _acceptable(pairs, nq: int) -> list[set]:
    if len(pairs) != nq:
        raise ValueError(f"{len(pairs)} pair entries for {nq} queries")
    out = []
    for q, p in enumerate(pairs):
        s = {int(p)} if np.isscalar(p) else {int(v) for v in p}
        if not s:
            raise ValueError(f"query {q} has no paired candidate")
        out.append(s)
    return out


def rank_candidates(D: np.ndarray) -> np.ndarray:
    """Candidate order per query; equal distances keep candidate index order."""
    return np.argsort(D, axis=1, kind="stable")


def recall_at_k(queries, candidates, pairs, k: int, alphas=1.0, metric: str = "l1",
                distances: np.ndarray | None = None) -> float:
    """Fraction of queries with an acceptable candidate among the ``k`` nearest.

    ``pairs[q]`` is a candidate index or a collection of acceptable indices.
    """
    if k < 1:
        raise ValueError("k must be at least 1")
    D = product_distances(queries, candidates, alphas, metric) if distances is None else distances
    ok = _acceptable(pairs, D.shape[0])
    top = rank_candidates(D)[:, :k]
    return float(np.mean([bool(ok[q].intersection(top[q].tolist())) for q in range(D.shape[0])]))


# -- hierarchy ----------------------------------------------------------------

@dataclass(frozen=True)
class HierMetrics:
    tie: float
    lca: float
    jaccard: float
    p_h: float
    r_h: float


def hierarchical_metrics(pred, truth, taxonomy: MetricTree) -> HierMetrics:
    """Tree-induced error, LCA distance and ancestor-set overlaps (sets include the node)."""
    for v in (pred, truth):
        if v not in taxonomy:
            raise KeyError(f"unknown node {v!r}")
    c = taxonomy.lca(pred, truth)
    ap, at = set(taxonomy.ancestors(pred)), set(taxonomy.ancestors(truth))
    inter = len(ap & at)
    return HierMetrics(
        tie=taxonomy.distance(pred, truth),
        lca=max(taxonomy.distance(pred, c), taxonomy.distance(truth, c)),
        jaccard=inter / len(ap | at),
        p_h=inter / len(ap),
        r_h=inter / len(at),
    )


def mean_hierarchical(preds: Sequence, truths: Sequence, taxonomy: MetricTree) -> HierMetrics:
    ms = [hierarchical_metrics(p, t, taxonomy) for p, t in zip(preds, truths)]
    if not ms:
        raise ValueError("no predictions to score")
    return HierMetrics(*np.mean([[m.tie, m.lca, m.jaccard, m.p_h, m.r_h] for m in ms], axis=0).tolist())


def join_taxonomies(trees: Sequence[MetricTree], root: str = "*") -> MetricTree:
    """One taxonomy with every tree hung below a virtual root by a unit edge."""
    edges = []
    for t in trees:
        if t.root == root or root in t:
            raise ValueError(f"virtual root id {root!r} already used")
        edges.append((root, t.root, 1.0))
        edges.extend(t.edges)
    return MetricTree(edges)


# -- norms and factor structure ----------------------------------------------

def factor_norms(spaces, alphas=1.0) -> np.ndarray:
    """``(n, k)`` distances from the origin, factor by factor."""
    S = _stack(spaces)
    return lorentz.origin_distance(S, np.broadcast_to(np.asarray(alphas, dtype=float), S.shape[1:2]))


@dataclass
class NormStats:
    mean: float
    std: float
    hist: list
    edges: list
    factor_mean: list


def norm_stats(spaces_by_role: Mapping[str, np.ndarray], alphas=1.0, bins: int = 20) -> dict:
    """Overall-norm distribution per role on shared histogram bins."""
    norms = {r: factor_norms(s, alphas) for r, s in spaces_by_role.items()}
    overall = {r: n.sum(axis=1) for r, n in norms.items()}
    allv = np.concatenate([v for v in overall.values()]) if overall else np.zeros(1)
    hi = float(allv.max()) if allv.size else 0.0
    edges = np.linspace(0.0, hi if hi > 0 else 1.0, bins + 1)
    out = {}
    for r, v in overall.items():
        h, _ = np.histogram(v, bins=edges)
        out[r] = NormStats(float(np.mean(v)) if v.size else 0.0, float(np.std(v)) if v.size else 0.0,
                           h.tolist(), edges.tolist(), norms[r].mean(axis=0).tolist() if v.size else [])
    return out


def specialization_purity(argmax: Mapping) -> float:
    """Share of groups whose peak factor no other group shares."""
    if not argmax:
        raise ValueError("no groups")
    vals = list(argmax.values())
    return float(np.mean([vals.count(v) == 1 for v in vals]))


@dataclass
class ActivationProfile:
    profile: dict
    argmax: dict
    purity: float


def activation_profile(spaces, groups: Mapping[str, Iterable[int]], alphas=1.0) -> ActivationProfile:
    """Mean per-factor norm per group, its peak factor (lowest index on ties) and purity."""
    N = factor_norms(spaces, alphas)
    profile, argmax = {}, {}
    for g, idx in groups.items():
        idx = np.asarray(list(idx), dtype=int)
        if idx.size == 0:
            raise ValueError(f"group {g!r} is empty")
        profile[g] = N[idx].mean(axis=0)
        argmax[g] = int(np.argmax(profile[g]))
    return ActivationProfile({g: v.tolist() for g, v in profile.items()}, argmax,
                             specialization_purity(argmax))


def compose_max(X: ProductPoint, Y: ProductPoint) -> ProductPoint:
    """Factor-wise pick of the larger-norm input; ties keep ``X``."""
    if X.k != Y.k or X.d != Y.d or not np.array_equal(X.alphas, Y.alphas):
        raise lorentz.GeometryError("compose_max needs points of the same product space")
    return ProductPoint(tuple(x if x.norm >= y.norm else y for x, y in zip(X.factors, Y.factors)))


# -- cones --------------------------------------------------------------------

def contained(X, Y, alphas=1.0, K: float = cones.DEFAULT_K) -> np.ndarray:
    """Per pair: ``X`` inside the cone of ``Y`` in every factor.

    A factor whose apex is the origin, or where ``X`` coincides with the
    apex, counts as contained.
    """
    X, Y = _stack(X), _stack(Y)
    alphas = np.broadcast_to(np.asarray(alphas, dtype=float), X.shape[1:2])
    t = lorentz.cosh_dist_minus_one(X, Y, alphas)
    degenerate = (np.linalg.norm(Y, axis=-1) == 0) | (t <= 0)
    with np.errstate(invalid="ignore"):
        phi = cones.exterior_angle_arr(X, Y, alphas)
    inside = phi < cones.half_aperture_arr(Y, alphas, K)
    return np.all(degenerate | inside, axis=-1)


def containment_rate(pairs: Sequence[tuple], alphas=1.0, K: float = cones.DEFAULT_K) -> float:
    """Fraction over all ``(X, Y)`` array pairs of entailments satisfied in every factor."""
    hits = [contained(X, Y, alphas, K) for X, Y in pairs]
    allh = np.concatenate(hits) if hits else np.zeros(0, bool)
    if allh.size == 0:
        raise ValueError("no entailment pairs")
    return float(np.mean(allh))


# -- report -------------------------------------------------------------------

@dataclass
class MetricsReport:
    recall_at_k: dict
    tie: float
    lca: float
    jaccard: float
    p_h: float
    r_h: float
    norm_stats: dict
    activation_profile: dict
    specialization_purity: float
    containment_rate: float = float("nan")
    extras: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["norm_stats"] = {r: asdict(s) if isinstance(s, NormStats) else s for r, s in self.norm_stats.items()}
        return d

    def to_json(self) -> str:
        return json.dumps(_jsonable(self.to_dict()), indent=1, sort_keys=True)

    def write(self, path) -> None:
        with open(path, "w") as fh:
            fh.write(self.to_json() + "\n")

    def write_histograms(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["role", "bin_lo", "bin_hi", "count"])
            for role, s in sorted(self.norm_stats.items()):
                s = asdict(s) if isinstance(s, NormStats) else s
                for lo, hi, c in zip(s["edges"][:-1], s["edges"][1:], s["hist"]):
                    w.writerow([role, repr(float(lo)), repr(float(hi)), int(c)])

    @classmethod
    def from_json(cls, text: str) -> MetricsReport:
        obj = json.loads(text)
        obj["norm_stats"] = {r: NormStats(**s) for r, s in obj["norm_stats"].items()}
        obj["recall_at_k"] = {int(k) if str(k).isdigit() else k: v for k, v in obj["recall_at_k"].items()}
        return cls(**obj)


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.generic):
        return obj.item()
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    return obj
