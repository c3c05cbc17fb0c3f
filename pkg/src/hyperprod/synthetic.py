"""Compositional toy datasets: concept families, instances and their derived entities.

Each family is a complete taxonomy.  An instance picks a few families and one
leaf from each; its image is that concept set, its text replaces every concept
by an ancestor, and it carries one (image box, text box) pair per concept.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .combinatorics import MetricTree, balanced_tree

Concept = tuple  # (family_id, node_id)


@dataclass(frozen=True)
class FamilySpec:
    family_id: str
    depth: int
    branching: int
    tree: MetricTree = field(repr=False, compare=False)

    def __post_init__(self):
        if self.depth < 1:
            raise ValueError("family depth must be at least 1")
        if self.branching < 2:
            raise ValueError("family branching must be at least 2")

    @property
    def leaves(self) -> list:
        return self.tree.leaves()

    def to_dict(self) -> dict:
        return {"family_id": self.family_id, "depth": self.depth, "branching": self.branching,
                "edges": [[p, c, w] for p, c, w in self.tree.edges]}

    @classmethod
    def from_dict(cls, obj: dict) -> FamilySpec:
        tree = MetricTree([tuple(e) for e in obj["edges"]])
        return cls(obj["family_id"], int(obj["depth"]), int(obj["branching"]), tree)


@dataclass(frozen=True)
class InstanceRecord:
    instance_id: str
    concepts: tuple  # image concept set, sorted by family
    text_concepts: tuple
    boxes: tuple  # ((image_concept, text_concept), ...)

    def to_dict(self) -> dict:
        return {
            "instance_id": self.instance_id,
            "concepts": [list(c) for c in self.concepts],
            "text_concepts": [list(c) for c in self.text_concepts],
            "boxes": [{"image": list(i), "text": list(t)} for i, t in self.boxes],
        }

    @classmethod
    def from_dict(cls, obj: dict) -> InstanceRecord:
        return cls(
            str(obj["instance_id"]),
            tuple(tuple(c) for c in obj["concepts"]),
            tuple(tuple(c) for c in obj["text_concepts"]),
            tuple((tuple(b["image"]), tuple(b["text"])) for b in obj["boxes"]),
        )

    def entailment_pairs(self) -> list[tuple[tuple, tuple]]:
        """(more specific, more general) concept sets implied by the record."""
        img, txt = self.concepts, self.text_concepts
        pairs = [(img, txt)]
        for bi, bt in self.boxes:
            pairs += [(img, (bi,)), (txt, (bt,)), ((bi,), (bt,))]
        return pairs


def gen_families(count: int, depth: int, branching: int, seed: int = 0) -> list[FamilySpec]:
    """``count`` complete taxonomies with node ids namespaced as ``f<i>:...``.

    Complete trees leave nothing to sample, so ``seed`` does not change the
    result; it is accepted so every generator shares one calling convention.
    """
    if count < 1:
        raise ValueError("need at least one family")
    return [FamilySpec(f"f{i}", depth, branching, balanced_tree(depth, branching, prefix=f"f{i}:"))
            for i in range(count)]


def _ancestor(tree: MetricTree, node, level: int):
    anc = tree.ancestors(node)
    return anc[min(level, len(anc) - 1)]


def gen_instances(families: Sequence[FamilySpec], n_instances: int, concepts_per_instance: int,
                  seed: int = 0, generalization: int = 1) -> list[InstanceRecord]:
    n_fam = len(families)
    if not 1 <= concepts_per_instance <= n_fam:
        raise ValueError(f"concepts_per_instance must be in [1, {n_fam}], got {concepts_per_instance}")
    if generalization < 0:
        raise ValueError("generalization level must be non-negative")
    rng = np.random.default_rng(seed)
    leaves = [f.leaves for f in families]
    width = len(str(max(n_instances - 1, 0)))
    out = []
    for n in range(n_instances):
        chosen = np.sort(rng.choice(n_fam, size=concepts_per_instance, replace=False))
        img, txt, boxes = [], [], []
        for j in chosen:
            fam = families[j]
            leaf = leaves[j][int(rng.integers(len(leaves[j])))]
            up = _ancestor(fam.tree, leaf, generalization)
            img.append((fam.family_id, leaf))
            txt.append((fam.family_id, up))
            boxes.append(((fam.family_id, leaf), (fam.family_id, up)))
        rec = InstanceRecord(f"i{n:0{width}d}", tuple(img), tuple(txt), tuple(boxes))
        out.append(rec)
    return out


def ground_truth_order(a: Iterable[Concept], b: Iterable[Concept], families: Sequence[FamilySpec]) -> bool:
    """``a`` entails ``b``: each concept of ``b`` has a descendant-or-equal concept in ``a``."""
    trees = {f.family_id: f.tree for f in families}
    a = list(a)
    for fb, nb in b:
        tree = trees[fb]
        if not any(fa == fb and tree.is_descendant(na, nb) for fa, na in a):
            return False
    return True


def check_record(rec: InstanceRecord, families: Sequence[FamilySpec]) -> None:
    for x, y in rec.entailment_pairs():
        if not ground_truth_order(x, y, families):
            raise ValueError(f"{rec.instance_id}: {x} does not entail {y}")


# -- files ------------------------------------------------------------------

def write_dataset(records: Sequence[InstanceRecord], path) -> None:
    with open(path, "w") as fh:
        for r in records:
            fh.write(json.dumps(r.to_dict(), sort_keys=True) + "\n")


def read_dataset(path) -> list[InstanceRecord]:
    out = []
    with open(path) as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                out.append(InstanceRecord.from_dict(json.loads(line)))
            except (ValueError, KeyError, TypeError) as exc:
                raise ValueError(f"{path}:{lineno}: bad record ({exc})") from None
    return out


def write_families(families: Sequence[FamilySpec], path) -> None:
    Path(path).write_text(json.dumps([f.to_dict() for f in families], indent=1, sort_keys=True) + "\n")


def read_families(path) -> list[FamilySpec]:
    return [FamilySpec.from_dict(o) for o in json.loads(Path(path).read_text())]
