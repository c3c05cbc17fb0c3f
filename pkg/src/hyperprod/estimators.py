"""scikit-learn style wrappers around training and tree embedding."""

from __future__ import annotations

import dataclasses

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from . import learning
from .combinatorics import MetricTree
from .constructive import DEFAULT_NODE_CAP, sarkar_embed
from .learning import TrainConfig, build_training_data

_ROLE_FIELD = {"image": "image", "text": "text"}


class ProductSpaceEmbedder(TransformerMixin, BaseEstimator):
    """Learn product-space embeddings of synthetic instance records.

    ``fit`` takes a list of :class:`~hyperprod.synthetic.InstanceRecord`;
    ``transform`` returns the flattened ``(n, k*d)`` space coordinates of the
    chosen role (``image`` or ``text``) for records over the fitted vocabulary.
    """

    def __init__(self, k=4, d=4, lr=0.05, steps=1000, warmup_steps=100, batch_size=64, seed=0,
                 gamma=0.2, eta_inter=0.7, eta_intra=1.2, weight_decay=0.0, momentum=0.0,
                 metric="l1", init_std=1.0, tau_init=0.07, clip_norm=0.0, scalar_lr_scale=1.0,
                 role="image", encoder="entity"):
        self.k = k
        self.d = d
        self.lr = lr
        self.steps = steps
        self.warmup_steps = warmup_steps
        self.batch_size = batch_size
        self.seed = seed
        self.gamma = gamma
        self.eta_inter = eta_inter
        self.eta_intra = eta_intra
        self.weight_decay = weight_decay
        self.momentum = momentum
        self.metric = metric
        self.init_std = init_std
        self.tau_init = tau_init
        self.clip_norm = clip_norm
        self.scalar_lr_scale = scalar_lr_scale
        self.role = role
        self.encoder = encoder

    def _config(self) -> TrainConfig:
        names = {f.name for f in dataclasses.fields(TrainConfig)}
        return TrainConfig(**{n: v for n, v in self.get_params().items() if n in names})

    def fit(self, X, y=None):
        if len(X) == 0:
            raise ValueError("need at least one record to fit")
        if self.role not in _ROLE_FIELD:
            raise ValueError(f"role must be 'image' or 'text', got {self.role!r}")
        data = build_training_data(X, encoder=self.encoder)
        res = learning.train(data, self._config())
        self.tokens_ = data.tokens
        self.table_ = res.table
        self.scalars_ = res.scalars
        self.loss_trace_ = np.asarray(res.trace)
        self.n_features_in_ = self.k * self.d
        return self

    def embed(self, X, role: str | None = None) -> np.ndarray:
        """``(n, k, d)`` space coordinates."""
        check_is_fitted(self, "table_")
        role = role or self.role
        data = build_training_data(X, self.tokens_, self.encoder)
        return self.table_.lift(getattr(data, _ROLE_FIELD[role]), role, self.scalars_)

    def transform(self, X):
        S = self.embed(X)
        return S.reshape(S.shape[0], -1)

    def score(self, X, y=None) -> float:
        """Text-to-image R@1 where any image with the query's text counts as a hit."""
        from .eval import recall_at_k

        check_is_fitted(self, "table_")
        I, T = self.embed(X, "image"), self.embed(X, "text")
        keys = [r.text_concepts for r in X]
        pairs = [[j for j, kj in enumerate(keys) if kj == kq] for kq in keys]
        return recall_at_k(T, I, pairs, 1, self.scalars_.alphas, self.metric)


class TreeEmbedder(BaseEstimator):
    """Low-distortion embedding of a metric tree into the hyperbolic plane."""

    def __init__(self, epsilon=0.1, node_cap=DEFAULT_NODE_CAP):
        self.epsilon = epsilon
        self.node_cap = node_cap

    def fit(self, X: MetricTree, y=None):
        if not isinstance(X, MetricTree):
            raise TypeError("fit expects a MetricTree")
        emb = sarkar_embed(X, self.epsilon, node_cap=self.node_cap)
        self.embedding_ = emb
        self.tau_ = emb.tau
        self.quality_ = emb.quality_
        return self

    def transform(self, X) -> np.ndarray:
        """Pairwise embedded distances among the given node ids."""
        check_is_fitted(self, "embedding_")
        ids = list(X)
        return np.array([[self.embedding_.distance(a, b) for b in ids] for a in ids])
