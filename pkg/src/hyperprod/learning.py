"""Contrastive + entailment training of a lookup encoder into the product space.

Entities are bags of tokens.  A token is one trainable ``k*d`` row of the
:class:`EmbeddingTable`; an entity's feature is the sum of its token rows,
scaled by the modality scalar and lifted factor-wise with ``expmap0``.  A bag
holding a single private token is an ordinary free embedding.

Gradients are written out by hand (``loss_gradient``) and checked against
finite differences in the test suite.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field, fields
from typing import Sequence

import numpy as np

from . import cones, lorentz
from .product import ProductPoint, ProductShape

log = logging.getLogger(__name__)

TAU_FLOOR = 0.01
ALPHA_MIN, ALPHA_MAX = 0.1, 10.0
GRAD_CLAMP_TOL = 1e-9
ROLES = ("image", "text", "image_box", "text_box")
METRICS = ("l1", "l2")


class NonFiniteError(FloatingPointError):
    def __init__(self, what: str, role: str | None = None, index: int | None = None,
                 factor: int | None = None):
        self.role, self.index, self.factor = role, index, factor
        where = []
        if role is not None:
            where.append(f"role={role}")
        if index is not None:
            where.append(f"entity={index}")
        if factor is not None:
            where.append(f"factor={factor}")
        super().__init__(f"non-finite {what}" + (f" at {', '.join(where)}" if where else ""))


def _check_finite(arr, what, role=None):
    arr = np.asarray(arr)
    if np.all(np.isfinite(arr)):
        return
    bad = np.argwhere(~np.isfinite(arr))[0]
    index = int(bad[0]) if arr.ndim >= 1 else None
    factor = int(bad[1]) if arr.ndim >= 2 else None
    raise NonFiniteError(what, role, index, factor)


# -- scalars ----------------------------------------------------------------

@dataclass
class TrainScalars:
    """Learnable and fixed scalars.  Learnable ones are stored as logarithms."""

    log_alpha: np.ndarray
    log_tau: float = math.log(0.07)
    log_c_img: float = 0.0
    log_c_txt: float = 0.0
    gamma: float = 0.2
    eta_inter: float = 0.7
    eta_intra: float = 1.2
    K: float = cones.DEFAULT_K

    def __post_init__(self):
        self.log_alpha = np.array(self.log_alpha, dtype=float).reshape(-1)
        cones.ConeParams(self.K)

    @classmethod
    def initial(cls, shape: ProductShape, c_init: float | None = None, tau: float = 0.07,
                alpha: float = 1.0, **kw) -> TrainScalars:
        c = 1.0 / math.sqrt(shape.total) if c_init is None else c_init
        return cls(np.full(shape.k, math.log(alpha)), math.log(tau), math.log(c), math.log(c), **kw)

    @property
    def k(self) -> int:
        return self.log_alpha.shape[0]

    @property
    def tau(self) -> float:
        return max(math.exp(self.log_tau), TAU_FLOOR)

    @property
    def alphas(self) -> np.ndarray:
        return np.clip(np.exp(self.log_alpha), ALPHA_MIN, ALPHA_MAX)

    @property
    def c_img(self) -> float:
        return math.exp(self.log_c_img)

    @property
    def c_txt(self) -> float:
        return math.exp(self.log_c_txt)

    def scale(self, role: str) -> float:
        return self.c_img if role.startswith("image") else self.c_txt

    # vector layout: [log_tau, log_c_img, log_c_txt, log_alpha_1..k]
    def vector(self) -> np.ndarray:
        return np.concatenate([[self.log_tau, self.log_c_img, self.log_c_txt], self.log_alpha])

    def set_vector(self, v) -> None:
        v = np.asarray(v, dtype=float)
        self.log_tau, self.log_c_img, self.log_c_txt = float(v[0]), float(v[1]), float(v[2])
        self.log_alpha = v[3:].copy()

    def clamp(self) -> None:
        self.log_tau = max(self.log_tau, math.log(TAU_FLOOR))
        self.log_alpha = np.clip(self.log_alpha, math.log(ALPHA_MIN), math.log(ALPHA_MAX))

    def copy(self) -> TrainScalars:
        out = TrainScalars(self.log_alpha.copy())
        for f in fields(self):
            if f.name != "log_alpha":
                setattr(out, f.name, getattr(self, f.name))
        return out

    def to_dict(self) -> dict:
        return {"tau": self.tau, "c_img": self.c_img, "c_txt": self.c_txt,
                "alphas": self.alphas.tolist(), "gamma": self.gamma,
                "eta_inter": self.eta_inter, "eta_intra": self.eta_intra, "K": self.K,
                "log_tau": self.log_tau, "log_c_img": self.log_c_img,
                "log_c_txt": self.log_c_txt, "log_alpha": self.log_alpha.tolist()}

    @classmethod
    def from_dict(cls, obj: dict) -> TrainScalars:
        return cls(np.asarray(obj["log_alpha"], dtype=float), float(obj["log_tau"]),
                   float(obj["log_c_img"]), float(obj["log_c_txt"]), float(obj["gamma"]),
                   float(obj["eta_inter"]), float(obj["eta_intra"]), float(obj["K"]))


# -- table and batches --------------------------------------------------------

class EmbeddingTable:
    """Token id -> ``k*d`` tangent parameters."""

    def __init__(self, tokens: Sequence, shape: ProductShape, weights=None):
        self.tokens = list(tokens)
        self.index = {t: i for i, t in enumerate(self.tokens)}
        if len(self.index) != len(self.tokens):
            raise ValueError("duplicate token ids")
        self.shape = shape
        if weights is None:
            weights = np.zeros((len(self.tokens), shape.total))
        weights = np.array(weights, dtype=float)
        if weights.shape != (len(self.tokens), shape.total):
            raise ValueError(f"weights must have shape ({len(self.tokens)}, {shape.total}), got {weights.shape}")
        _check_finite(weights, "table parameters")
        self.weights = weights

    @classmethod
    def random(cls, tokens, shape: ProductShape, rng: np.random.Generator, std: float = 1.0):
        return cls(tokens, shape, rng.normal(0.0, std, (len(tokens), shape.total)))

    def __len__(self):
        return len(self.tokens)

    def copy(self) -> EmbeddingTable:
        return EmbeddingTable(self.tokens, self.shape, self.weights.copy())

    def features(self, bags) -> np.ndarray:
        """Summed rows for an ``(n, m)`` bag array padded with ``-1``."""
        bags = np.asarray(bags, dtype=np.int64)
        rows = self.weights[np.maximum(bags, 0)]
        return np.sum(rows * (bags >= 0)[..., None], axis=1)

    def lift(self, bags, role: str, scalars: TrainScalars) -> np.ndarray:
        """``(n, k, d)`` space coordinates of the entities described by ``bags``."""
        F = self.features(bags)
        V = (scalars.scale(role) * F).reshape(-1, self.shape.k, self.shape.d)
        return lorentz.expmap0(V, scalars.alphas)

    def points(self, bags, role: str, scalars: TrainScalars) -> list[ProductPoint]:
        alphas = scalars.alphas
        return [ProductPoint.from_array(s, alphas) for s in self.lift(bags, role, scalars)]


def pad_bags(bags: Sequence[Sequence[int]]) -> np.ndarray:
    width = max((len(b) for b in bags), default=1) or 1
    out = np.full((len(bags), width), -1, dtype=np.int64)
    for i, b in enumerate(bags):
        out[i, : len(b)] = b
    return out


@dataclass
class Batch:
    """Aligned token bags for the four entity roles; row ``b`` is instance ``b``."""

    image: np.ndarray
    text: np.ndarray
    image_box: np.ndarray
    text_box: np.ndarray
    ids: list = field(default_factory=list)

    def __post_init__(self):
        for r in ROLES:
            a = np.asarray(getattr(self, r), dtype=np.int64)
            if a.ndim == 1:
                a = a[:, None]
            setattr(self, r, a)
        sizes = {getattr(self, r).shape[0] for r in ROLES}
        if len(sizes) != 1:
            raise ValueError(f"role arrays have different batch sizes: {sorted(sizes)}")
        if self.size < 1:
            raise ValueError("a batch needs at least one instance")

    @property
    def size(self) -> int:
        return self.image.shape[0]


# -- distances ----------------------------------------------------------------

def _pairwise(X, Y, alphas):
    """Factor distances between every row of ``X`` (B,k,d) and ``Y`` (C,k,d)."""
    x0 = lorentz.time_coord(X, alphas)
    y0 = lorentz.time_coord(Y, alphas)
    t = np.maximum(lorentz.cosh_dist_minus_one(X[:, None], Y[None], alphas), 0.0)
    dist = lorentz.acosh1p(t) / np.sqrt(alphas)
    return dist, (X, Y, x0, y0, t, dist)


def _pairwise_vjp(cache, alphas, G):
    X, Y, x0, y0, t, dist = cache
    tc = np.maximum(t, GRAD_CLAMP_TOL)
    gm = G / (np.sqrt(alphas) * np.sqrt(tc * (tc + 2.0)))
    A = gm * alphas
    gX = (np.sum(A * y0[None], axis=1) / x0)[..., None] * X - np.einsum("bck,ckd->bkd", A, Y)
    gY = (np.sum(A * x0[:, None], axis=0) / y0)[..., None] * Y - np.einsum("bck,bkd->ckd", A, X)
    m = 1.0 + t
    dm_da = m / alphas - (y0[None] / x0[:, None] + x0[:, None] / y0[None]) / (2.0 * alphas)
    ga = np.sum(-G * dist / (2.0 * alphas) + gm * dm_da, axis=(0, 1))
    return gX, gY, ga


def combine(dist, metric: str):
    """Product distance from factor distances ``(..., k)``: averaged l1 or scaled l2."""
    k = dist.shape[-1]
    if metric == "l1":
        return np.mean(dist, axis=-1)
    if metric == "l2":
        return np.sqrt(np.sum(dist * dist, axis=-1) / k)
    raise ValueError(f"unknown metric {metric!r}; expected one of {METRICS}")


def _combine_vjp(dist, D, gD, metric):
    k = dist.shape[-1]
    if metric == "l1":
        return np.broadcast_to(gD[..., None] / k, dist.shape)
    safe = np.where(D > 0, D, 1.0)
    return np.where(D[..., None] > 0, (gD / (k * safe))[..., None] * dist, 0.0)


# -- losses -----------------------------------------------------------------

def _infonce(D, tau):
    """Row-wise InfoNCE with diagonal positives; returns loss and softmax."""
    logits = -D / tau
    mx = np.max(logits, axis=1, keepdims=True)
    e = np.exp(logits - mx)
    s = np.sum(e, axis=1, keepdims=True)
    lse = mx[:, 0] + np.log(s[:, 0])
    loss = float(np.sum(lse - np.diagonal(logits)))
    return loss, e / s


def _infonce_vjp(D, P, tau):
    """Gradients w.r.t. ``D`` and ``tau`` of the summed InfoNCE loss."""
    R = P - np.eye(D.shape[0])
    return -R / tau, float(np.sum(R * D)) / (tau * tau)


def _as_stack(X) -> np.ndarray:
    if isinstance(X, ProductPoint):
        return X.spaces[None]
    if len(X) and isinstance(X[0], ProductPoint):
        return np.stack([p.spaces for p in X])
    return np.asarray(X, dtype=float)


def contrastive_loss(X, Y, tau, alphas=1.0, metric: str = "l1") -> float:
    """Summed InfoNCE of ``X_b`` against ``Y_b`` among all ``Y_a``.

    ``X`` and ``Y`` are ``(B, k, d)`` arrays or sequences of ProductPoints.
    """
    X, Y = _as_stack(X), _as_stack(Y)
    if X.shape[0] == 0 or Y.shape[0] == 0:
        raise ValueError("contrastive loss needs a non-empty batch")
    if X.shape != Y.shape:
        raise ValueError(f"batch shapes differ: {X.shape} vs {Y.shape}")
    alphas = np.broadcast_to(np.asarray(alphas, dtype=float), X.shape[1:2])
    dist, _ = _pairwise(X, Y, alphas)
    return _infonce(combine(dist, metric), tau)[0]


def _entail_terms(X, Y, alphas, eta, K):
    """Per-factor hinge ``max(0, phi - eta*omega)`` with the degenerate cases set to 0."""
    t = lorentz.cosh_dist_minus_one(X, Y, alphas)
    ny = np.linalg.norm(Y, axis=-1)
    defined = (ny > 0) & (t > 0)
    with np.errstate(invalid="ignore"):
        u = cones.angle_cosine(X, Y, alphas)
    phi = np.arccos(np.clip(np.where(defined, u, 1.0), -1.0, 1.0))
    omega = cones.half_aperture_arr(Y, alphas, K)
    viol = phi - eta * omega
    return np.where(defined & (viol > 0), viol, 0.0), defined & (viol > 0)


def entailment_pair_loss(X, Y, eta: float, scalars: TrainScalars | None = None, alphas=None,
                         K: float | None = None) -> float:
    """Mean over factors of the cone violation of ``X`` (specific) under ``Y`` (general).

    Curvatures and ``K`` come from ``scalars`` unless given explicitly.  Factors
    whose apex sits at the origin, or where ``X`` coincides with the apex, add 0.
    """
    X, Y = _as_stack(X), _as_stack(Y)
    if alphas is None:
        alphas = scalars.alphas if scalars is not None else 1.0
    if K is None:
        K = scalars.K if scalars is not None else cones.DEFAULT_K
    alphas = np.broadcast_to(np.asarray(alphas, dtype=float), X.shape[1:2])
    h, _ = _entail_terms(X, Y, alphas, eta, K)
    return float(np.sum(np.mean(h, axis=-1)))


ENTAIL_PAIRS = (("image", "text", "eta_inter"), ("image_box", "text_box", "eta_inter"),
                ("image", "image_box", "eta_intra"), ("text", "text_box", "eta_intra"))
CONTRAST_PAIRS = (("image", "text"), ("image_box", "text_box"))


@dataclass
class LossParts:
    total: float
    contrastive: float
    entailment: float


@dataclass
class Gradient:
    table: np.ndarray
    scalars: np.ndarray  # same layout as TrainScalars.vector()

    def flat(self) -> np.ndarray:
        return np.concatenate([self.table.ravel(), self.scalars])


def _evaluate(batch: Batch, table: EmbeddingTable, scalars: TrainScalars, metric="l1",
              grad=False):
    k, d = table.shape.k, table.shape.d
    alphas = scalars.alphas
    tau = scalars.tau
    feats, lifted, spaces = {}, {}, {}
    for r in ROLES:
        F = table.features(getattr(batch, r))
        V = (scalars.scale(r) * F).reshape(-1, k, d)
        X = lorentz.expmap0(V, alphas)
        _check_finite(X, "embedding", r)
        feats[r], lifted[r], spaces[r] = F, V, X

    gS = {r: np.zeros_like(spaces[r]) for r in ROLES}
    g_alpha = np.zeros(k)
    g_tau = 0.0

    contrast = 0.0
    for a, b in CONTRAST_PAIRS:
        dist, cache = _pairwise(spaces[a], spaces[b], alphas)
        D = combine(dist, metric)
        l_ab, P_ab = _infonce(D, tau)
        l_ba, P_ba = _infonce(D.T, tau)
        contrast += 0.25 * (l_ab + l_ba)
        if grad:
            gD1, gt1 = _infonce_vjp(D, P_ab, tau)
            gD2, gt2 = _infonce_vjp(D.T, P_ba, tau)
            gD = 0.25 * (gD1 + gD2.T)
            g_tau += 0.25 * (gt1 + gt2)
            G = _combine_vjp(dist, D, gD, metric)
            gx, gy, ga = _pairwise_vjp(cache, alphas, G)
            gS[a] += gx
            gS[b] += gy
            g_alpha += ga

    entail = 0.0
    for a, b, eta_name in ENTAIL_PAIRS:
        eta = getattr(scalars, eta_name)
        X, Y = spaces[a], spaces[b]
        h, active = _entail_terms(X, Y, alphas, eta, scalars.K)
        entail += float(np.sum(np.mean(h, axis=-1)))
        if grad and scalars.gamma != 0 and np.any(active):
            gphi = np.where(active, scalars.gamma / k, 0.0)
            gx, gy, ga = cones.exterior_angle_vjp(X, Y, alphas, gphi, GRAD_CLAMP_TOL)
            gy2, ga2 = cones.half_aperture_vjp(Y, alphas, -eta * gphi, scalars.K)
            gS[a] += gx
            gS[b] += gy + gy2
            g_alpha += np.sum(ga + ga2, axis=0)

    parts = LossParts(contrast + scalars.gamma * entail, contrast, entail)
    if not math.isfinite(parts.total):
        raise NonFiniteError("loss")
    if not grad:
        return parts, None

    g_table = np.zeros_like(table.weights)
    g_logc = {"image": 0.0, "text": 0.0}
    for r in ROLES:
        _check_finite(gS[r], "embedding gradient", r)
        gV, ga = lorentz.expmap0_vjp(lifted[r], alphas, gS[r])
        g_alpha += np.sum(ga, axis=0)
        c = scalars.scale(r)
        gV = gV.reshape(gV.shape[0], -1)
        g_logc["image" if r.startswith("image") else "text"] += c * float(np.sum(feats[r] * gV))
        bags = getattr(batch, r)
        for j in range(bags.shape[1]):
            col = bags[:, j]
            keep = col >= 0
            np.add.at(g_table, col[keep], c * gV[keep])

    # a scalar sitting on its clamp bound counts as clamped
    la = scalars.log_alpha
    alpha_free = (la > math.log(ALPHA_MIN)) & (la < math.log(ALPHA_MAX))
    tau_free = scalars.log_tau > math.log(TAU_FLOOR)
    g_scal = np.concatenate([
        [g_tau * tau if tau_free else 0.0, g_logc["image"], g_logc["text"]],
        np.where(alpha_free, g_alpha * alphas, 0.0),
    ])
    _check_finite(g_scal, "scalar gradient")
    return parts, Gradient(g_table, g_scal)


def contrastive_total(batch: Batch, table: EmbeddingTable, scalars: TrainScalars, metric="l1") -> float:
    return _evaluate(batch, table, scalars, metric)[0].contrastive


def entailment_total(batch: Batch, table: EmbeddingTable, scalars: TrainScalars) -> float:
    return _evaluate(batch, table, scalars)[0].entailment


def overall_loss(batch: Batch, table: EmbeddingTable, scalars: TrainScalars, metric="l1") -> float:
    return _evaluate(batch, table, scalars, metric)[0].total


def loss_parts(batch: Batch, table: EmbeddingTable, scalars: TrainScalars, metric="l1") -> LossParts:
    return _evaluate(batch, table, scalars, metric)[0]


def loss_gradient(batch: Batch, table: EmbeddingTable, scalars: TrainScalars,
                  metric="l1") -> tuple[float, Gradient]:
    parts, g = _evaluate(batch, table, scalars, metric, grad=True)
    return parts.total, g


# -- datasets -----------------------------------------------------------------

@dataclass
class TrainingData:
    """Instances as token bags.  Image-side and text-side concepts get separate tokens."""

    tokens: list
    image: np.ndarray
    text: np.ndarray
    image_box: np.ndarray  # (n, max boxes), -1 padded
    text_box: np.ndarray
    ids: list

    def __len__(self):
        return self.image.shape[0]

    @property
    def n_boxes(self) -> np.ndarray:
        return np.sum(self.image_box >= 0, axis=1)

    def subset(self, rows) -> TrainingData:
        rows = np.asarray(rows)
        return TrainingData(self.tokens, self.image[rows], self.text[rows], self.image_box[rows],
                            self.text_box[rows], [self.ids[i] for i in rows])

    def batch(self, rows, box_choice) -> Batch:
        rows = np.asarray(rows)
        ib = self.image_box[rows, box_choice]
        tb = self.text_box[rows, box_choice]
        return Batch(self.image[rows], self.text[rows], ib, tb, [self.ids[i] for i in rows])

    def full_batch(self) -> Batch:
        """Every instance once with its first box pair."""
        return self.batch(np.arange(len(self)), np.zeros(len(self), dtype=np.int64))


ENCODERS = ("entity", "compositional")


def entity_token(role: str, concepts) -> str:
    """Token id ``<role>|<node>+<node>...``; node ids carry their family prefix."""
    return f"{role}|" + "+".join(str(c[1]) for c in concepts)


def token_role(token) -> str:
    return str(token).split("|", 1)[0]


def token_modality(token) -> str:
    return "image" if token_role(token).startswith("image") else "text"


def _record_bags(r, encoder: str):
    """Token ids for the four roles of one record (boxes as lists)."""
    if encoder == "entity":
        return ([entity_token("image", r.concepts)], [entity_token("text", r.text_concepts)],
                [entity_token("image_box", [b[0]]) for b in r.boxes],
                [entity_token("text_box", [b[1]]) for b in r.boxes])
    if encoder == "compositional":
        return ([entity_token("image", [c]) for c in r.concepts],
                [entity_token("text", [c]) for c in r.text_concepts],
                [entity_token("image", [b[0]]) for b in r.boxes],
                [entity_token("text", [b[1]]) for b in r.boxes])
    raise ValueError(f"encoder must be one of {ENCODERS}, got {encoder!r}")


def build_training_data(records, tokens: Sequence | None = None, encoder: str = "entity") -> TrainingData:
    """Token bags for synthetic instance records.

    ``entity``: every image, text, image box and text box is its own row,
    keyed by role and concept set, so instances sharing an entity share a row.
    ``compositional``: one row per (modality, concept); an entity sums the rows
    of its concepts.

    ``tokens`` fixes the vocabulary (e.g. to encode held-out records with a
    trained table); an unknown entity then raises ``KeyError``.
    """
    bags = [_record_bags(r, encoder) for r in records]
    if tokens is None:
        seen: dict = {}
        for group in bags:
            for role_tokens in group:
                for t in role_tokens:
                    seen.setdefault(t, None)
        tokens = sorted(seen)
    tokens = list(tokens)
    index = {t: i for i, t in enumerate(tokens)}

    def ids(ts):
        return [index[t] for t in ts]

    image = pad_bags([ids(b[0]) for b in bags])
    text = pad_bags([ids(b[1]) for b in bags])
    # each box is a single token, so these are (n, boxes per record)
    ib = pad_bags([ids(b[2]) for b in bags])
    tb = pad_bags([ids(b[3]) for b in bags])
    if np.any(np.sum(ib >= 0, axis=1) == 0):
        raise ValueError("every record needs at least one box pair")
    return TrainingData(tokens, image, text, ib, tb, [r.instance_id for r in records])


# -- training -----------------------------------------------------------------

@dataclass
class TrainConfig:
    k: int = 4
    d: int = 4
    lr: float = 0.05
    steps: int = 1000
    warmup_steps: int = 100
    batch_size: int = 64
    seed: int = 0
    gamma: float = 0.2
    eta_inter: float = 0.7
    eta_intra: float = 1.2
    weight_decay: float = 0.0
    deterministic: bool = True
    momentum: float = 0.0
    metric: str = "l1"
    init_std: float = 1.0
    tau_init: float = 0.07
    clip_norm: float = 0.0  # global gradient-norm clip, 0 disables
    scalar_lr_scale: float = 1.0  # scalar step = lr * scalar_lr_scale

    def __post_init__(self):
        ProductShape(self.k, self.d)
        if self.metric not in METRICS:
            raise ValueError(f"metric must be one of {METRICS}, got {self.metric!r}")
        for name in ("lr", "weight_decay", "momentum", "clip_norm", "scalar_lr_scale"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be non-negative")
        if self.steps < 0 or self.warmup_steps < 0 or self.batch_size < 1:
            raise ValueError("steps, warmup_steps must be >= 0 and batch_size >= 1")

    @property
    def shape(self) -> ProductShape:
        return ProductShape(self.k, self.d)


def lr_at(step: int, cfg: TrainConfig) -> float:
    """Linear warm-up to ``lr`` then cosine decay to zero at ``steps``."""
    if cfg.warmup_steps and step < cfg.warmup_steps:
        return cfg.lr * (step + 1) / cfg.warmup_steps
    span = max(cfg.steps - cfg.warmup_steps, 1)
    frac = min(max(step - cfg.warmup_steps, 0) / span, 1.0)
    return 0.5 * cfg.lr * (1.0 + math.cos(math.pi * frac))


class DivergenceError(RuntimeError):
    def __init__(self, step: int, trace: list):
        self.step, self.trace = step, trace
        super().__init__(f"training diverged at step {step}")


@dataclass
class TrainResult:
    table: EmbeddingTable
    scalars: TrainScalars
    trace: list  # total loss per step, evaluated before the update
    parts: list = field(default_factory=list)  # (contrastive, entailment) per step


def init_state(data: TrainingData, cfg: TrainConfig) -> tuple[EmbeddingTable, TrainScalars]:
    rng = np.random.default_rng([cfg.seed, 1])
    table = EmbeddingTable.random(data.tokens, cfg.shape, rng, cfg.init_std)
    scalars = TrainScalars.initial(cfg.shape, tau=cfg.tau_init, gamma=cfg.gamma,
                                   eta_inter=cfg.eta_inter, eta_intra=cfg.eta_intra)
    return table, scalars


def train(data: TrainingData, cfg: TrainConfig, table: EmbeddingTable | None = None,
          scalars: TrainScalars | None = None, callback=None) -> TrainResult:
    """Mini-batch SGD with decoupled weight decay on the table only.

    Batches are drawn without replacement within a batch; each instance in a
    batch contributes one of its box pairs, chosen uniformly.
    """
    if table is None or scalars is None:
        t0, s0 = init_state(data, cfg)
        table = table if table is not None else t0
        scalars = scalars if scalars is not None else s0
    table, scalars = table.copy(), scalars.copy()
    rng = np.random.default_rng([cfg.seed, 2])
    n = len(data)
    B = min(cfg.batch_size, n)
    n_boxes = data.n_boxes
    vel_w = np.zeros_like(table.weights)
    vel_s = np.zeros(scalars.vector().shape)
    trace, parts = [], []
    for step in range(cfg.steps):
        rows = rng.choice(n, size=B, replace=False)
        box = rng.integers(0, n_boxes[rows])
        batch = data.batch(rows, box)
        try:
            p, g = _evaluate(batch, table, scalars, cfg.metric, grad=True)
        except NonFiniteError as exc:
            raise DivergenceError(step, trace) from exc
        trace.append(p.total)
        parts.append((p.contrastive, p.entailment))
        lr = lr_at(step, cfg)
        gw, gs = g.table, g.scalars
        if cfg.clip_norm:
            norm = math.sqrt(float(np.sum(gw * gw) + np.sum(gs * gs)))
            if norm > cfg.clip_norm:
                gw, gs = gw * (cfg.clip_norm / norm), gs * (cfg.clip_norm / norm)
        if cfg.momentum:
            vel_w = cfg.momentum * vel_w + gw
            vel_s = cfg.momentum * vel_s + gs
            gw, gs = vel_w, vel_s
        if lr:
            table.weights *= 1.0 - lr * cfg.weight_decay
            table.weights -= lr * gw
            scalars.set_vector(scalars.vector() - lr * cfg.scalar_lr_scale * gs)
            scalars.clamp()
        if not np.all(np.isfinite(table.weights)):
            raise DivergenceError(step, trace)
        if callback is not None:
            callback(step, p, table, scalars)
    return TrainResult(table, scalars, trace, parts)
