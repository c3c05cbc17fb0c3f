"""End-to-end synthetic runs: generate, split, train, evaluate."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from . import eval as ev
from .learning import (EmbeddingTable, TrainConfig, TrainingData, TrainResult, TrainScalars,
                       build_training_data, entity_token, train)
from .synthetic import FamilySpec, InstanceRecord, gen_families, gen_instances


@dataclass
class DataConfig:
    families: int = 4
    depth: int = 2
    branching: int = 3
    concepts_per_instance: int = 2
    instances: int = 2000
    holdout: int = 200
    generalization: int = 1
    encoder: str = "entity"

    def __post_init__(self):
        if self.holdout < 0 or self.instances < 1:
            raise ValueError("instances must be >= 1 and holdout >= 0")


@dataclass
class Split:
    families: list
    train_records: list
    test_records: list
    train: TrainingData
    test: TrainingData
    encoder: str


def make_split(families: Sequence[FamilySpec], records: Sequence[InstanceRecord], holdout: int,
               encoder: str = "entity") -> Split:
    """Last ``holdout`` records are held out.  The vocabulary covers every record,
    so held-out entities never seen in training keep their initial rows.
    With ``holdout=0`` the training records double as the evaluation set."""
    if not 0 <= holdout < len(records):
        raise ValueError(f"holdout {holdout} leaves no training records out of {len(records)}")
    data = build_training_data(records, encoder=encoder)
    n = len(records) - holdout
    test = np.arange(n, len(records)) if holdout else np.arange(n)
    return Split(list(families), list(records[:n]), [records[i] for i in test],
                 data.subset(np.arange(n)), data.subset(test), encoder)


def generate(cfg: DataConfig, seed: int) -> tuple[list, list]:
    fams = gen_families(cfg.families, cfg.depth, cfg.branching, seed)
    recs = gen_instances(fams, cfg.instances + cfg.holdout, cfg.concepts_per_instance, seed,
                         cfg.generalization)
    return fams, recs


def _box_token(encoder: str, role: str, concept) -> str:
    if encoder == "entity":
        return entity_token(role, [concept])
    return entity_token(role.split("_")[0], [concept])


def text_equivalence_pairs(records: Sequence[InstanceRecord]) -> list[list[int]]:
    """For each record, the records whose text describes the same concepts."""
    keys = [r.text_concepts for r in records]
    groups: dict = {}
    for j, kj in enumerate(keys):
        groups.setdefault(kj, []).append(j)
    return [groups[kq] for kq in keys]


def evaluate(split: Split, table: EmbeddingTable, scalars: TrainScalars, metric: str = "l1",
             ks: Sequence[int] = (1, 5)) -> ev.MetricsReport:
    a, K = scalars.alphas, scalars.K
    test = split.test
    I = table.lift(test.image, "image", scalars)
    T = table.lift(test.text, "text", scalars)
    D = ev.product_distances(T, I, a, metric)
    eq_pairs = text_equivalence_pairs(split.test_records)
    recall = {k: ev.recall_at_k(T, I, eq_pairs, k, distances=D) for k in ks}
    strict = {k: ev.recall_at_k(T, I, list(range(len(test))), k, distances=D) for k in ks}

    # entailment containment over the training pairs, every box of every record
    tr = split.train
    Itr = table.lift(tr.image, "image", scalars)
    Ttr = table.lift(tr.text, "text", scalars)
    rates = {"image-text": [ev.contained(Itr, Ttr, a, K)], "image_box-text_box": [],
             "image-image_box": [], "text-text_box": []}
    for j in range(tr.image_box.shape[1]):
        m = tr.image_box[:, j] >= 0
        Ib = table.lift(tr.image_box[m, j:j + 1], "image_box", scalars)
        Tb = table.lift(tr.text_box[m, j:j + 1], "text_box", scalars)
        rates["image_box-text_box"].append(ev.contained(Ib, Tb, a, K))
        rates["image-image_box"].append(ev.contained(Itr[m], Ib, a, K))
        rates["text-text_box"].append(ev.contained(Ttr[m], Tb, a, K))
    hits = {n: np.concatenate(v) for n, v in rates.items()}
    inter = np.concatenate([hits["image-text"], hits["image_box-text_box"]])
    every = np.concatenate(list(hits.values()))

    # hierarchical classification: held-out image boxes vs every text-box entity
    taxonomy = ev.join_taxonomies([f.tree for f in split.families])
    tb_tokens = sorted({_box_token(split.encoder, "text_box", bt)
                        for r in split.train_records + split.test_records for _, bt in r.boxes})
    tb_nodes = [t.split("|", 1)[1] for t in tb_tokens]
    idx = {t: i for i, t in enumerate(table.tokens)}
    C = table.lift(np.array([[idx[t]] for t in tb_tokens]), "text_box", scalars)
    boxes = [(bi, bt) for r in split.test_records for bi, bt in r.boxes]
    Q = table.lift(np.array([[idx[_box_token(split.encoder, "image_box", bi)]] for bi, _ in boxes]),
                   "image_box", scalars)
    pred = [tb_nodes[j] for j in np.argmin(ev.product_distances(Q, C, a, metric), axis=1)]
    hm = ev.mean_hierarchical(pred, [bt[1] for _, bt in boxes], taxonomy)

    # norms per role and the per-family activation profile of image boxes
    full = TrainingData(tr.tokens, np.concatenate([tr.image, test.image]),
                        np.concatenate([tr.text, test.text]), tr.image_box, tr.text_box, tr.ids)
    spaces = {"image": table.lift(full.image, "image", scalars),
              "text": table.lift(full.text, "text", scalars)}
    ib_tokens, tbx_tokens = {}, {}
    for r in split.train_records:
        for bi, bt in r.boxes:
            ib_tokens.setdefault(bi[0], set()).add(idx[_box_token(split.encoder, "image_box", bi)])
            tbx_tokens.setdefault(bt[0], set()).add(idx[_box_token(split.encoder, "text_box", bt)])
    all_ib = sorted(set().union(*ib_tokens.values()))
    all_tb = sorted(set().union(*tbx_tokens.values()))
    spaces["image_box"] = table.lift(np.array(all_ib)[:, None], "image_box", scalars)
    spaces["text_box"] = table.lift(np.array(all_tb)[:, None], "text_box", scalars)
    norms = ev.norm_stats(spaces, a)
    pos = {t: i for i, t in enumerate(all_ib)}
    groups = {f: sorted(pos[t] for t in toks) for f, toks in sorted(ib_tokens.items())}
    prof = ev.activation_profile(spaces["image_box"], groups, a)

    return ev.MetricsReport(
        recall_at_k=recall, tie=hm.tie, lca=hm.lca, jaccard=hm.jaccard, p_h=hm.p_h, r_h=hm.r_h,
        norm_stats=norms, activation_profile={"profile": prof.profile, "argmax": prof.argmax},
        specialization_purity=prof.purity, containment_rate=float(np.mean(inter)),
        extras={
            "recall_at_k_strict": strict,
            "containment_all_pairs": float(np.mean(every)),
            "containment_by_pair": {n: float(np.mean(v)) for n, v in hits.items()},
            "scalars": scalars.to_dict(),
            "metric": metric,
        })


@dataclass
class RunOutcome:
    seed: int
    result: TrainResult
    report: ev.MetricsReport
    split: Split = field(repr=False)


def run(data_cfg: DataConfig, train_cfg: TrainConfig) -> RunOutcome:
    fams, recs = generate(data_cfg, train_cfg.seed)
    split = make_split(fams, recs, data_cfg.holdout, data_cfg.encoder)
    res = train(split.train, train_cfg)
    return RunOutcome(train_cfg.seed, res, evaluate(split, res.table, res.scalars, train_cfg.metric), split)
