"""Metric trees, Boolean lattices and their exact images in the product space."""

from __future__ import annotations

from collections import deque
from pathlib import Path
from typing import Hashable, Iterable, Sequence

import numpy as np

from .lorentz import sinhc
from .product import ProductPoint, ProductShape


class TreeFormatError(ValueError):
    def __init__(self, message: str, lineno: int | None = None):
        self.lineno = lineno
        prefix = f"line {lineno}: " if lineno is not None else ""
        super().__init__(prefix + message)


class MetricTree:
    """Finite rooted tree with positive edge lengths and its path metric.

    Node order is the order of first appearance, root first.
    """

    def __init__(self, edges: Iterable[tuple[Hashable, Hashable, float]], root=None):
        self.parent: dict = {}
        self.length: dict = {}
        self.children: dict = {}
        seen: list = []
        seen_ids: set = set()
        for p, c, w in edges:
            w = float(w)
            if not w > 0 or not np.isfinite(w):
                raise ValueError(f"edge {p!r}->{c!r} has non-positive length {w}")
            if c in self.parent:
                raise ValueError(f"node {c!r} has more than one parent")
            if p == c:
                raise ValueError(f"self-loop at {p!r}")
            self.parent[c] = p
            self.length[c] = w
            self.children.setdefault(p, []).append(c)
            self.children.setdefault(c, [])
            for v in (p, c):
                if v not in seen_ids:
                    seen_ids.add(v)
                    seen.append(v)
        roots = [v for v in seen if v not in self.parent]
        if root is None:
            if len(roots) != 1:
                raise ValueError(f"expected exactly one root, found {len(roots)}")
            root = roots[0]
        elif not seen:
            self.children[root] = []
            seen = [root]
        elif roots != [root]:
            raise ValueError(f"{root!r} is not the unique parentless node")
        self.root = root
        order = self._bfs()
        if len(order) != len(seen):
            raise ValueError("edges do not form a connected tree")
        self.nodes: list = order
        self.index = {v: i for i, v in enumerate(order)}
        self.depth = {root: 0}
        self.root_dist = {root: 0.0}
        for v in order[1:]:
            p = self.parent[v]
            self.depth[v] = self.depth[p] + 1
            self.root_dist[v] = self.root_dist[p] + self.length[v]

    def _bfs(self) -> list:
        out, queue = [], deque([self.root])
        while queue:
            v = queue.popleft()
            out.append(v)
            queue.extend(self.children.get(v, []))
        return out

    @classmethod
    def single(cls, node) -> MetricTree:
        return cls([], root=node)

    def __len__(self):
        return len(self.nodes)

    def __contains__(self, v):
        return v in self.index

    @property
    def edges(self) -> list[tuple]:
        return [(self.parent[v], v, self.length[v]) for v in self.nodes[1:]]

    def neighbors(self, v) -> list:
        out = list(self.children[v])
        if v in self.parent:
            out.insert(0, self.parent[v])
        return out

    def edge_length(self, u, v) -> float:
        if self.parent.get(v) == u:
            return self.length[v]
        if self.parent.get(u) == v:
            return self.length[u]
        raise KeyError(f"no edge between {u!r} and {v!r}")

    def ancestors(self, v) -> list:
        """Path from ``v`` up to the root, ``v`` included."""
        self._check(v)
        out = [v]
        while out[-1] in self.parent:
            out.append(self.parent[out[-1]])
        return out

    def lca(self, a, b):
        anc = set(self.ancestors(a))
        for v in self.ancestors(b):
            if v in anc:
                return v
        raise AssertionError("tree has no common ancestor")  # unreachable for a valid tree

    def is_descendant(self, a, b) -> bool:
        """True if ``a`` equals ``b`` or lies below it."""
        return b in self.ancestors(a)

    def leaves(self) -> list:
        return [v for v in self.nodes if not self.children[v]]

    def _check(self, v):
        if v not in self.index:
            raise KeyError(f"unknown node {v!r}")

    def distance(self, a, b) -> float:
        self._check(a)
        self._check(b)
        if a == b:
            return 0.0
        c = self.lca(a, b)
        return self.root_dist[a] + self.root_dist[b] - 2.0 * self.root_dist[c]

    def distance_matrix(self) -> np.ndarray:
        """All-pairs path lengths in node order (one traversal per source)."""
        n = len(self.nodes)
        D = np.zeros((n, n))
        adj = [[(self.index[u], self.edge_length(v, u)) for u in self.neighbors(v)] for v in self.nodes]
        for s in range(n):
            stack = [(s, -1, 0.0)]
            while stack:
                v, prev, dv = stack.pop()
                D[s, v] = dv
                for u, w in adj[v]:
                    if u != prev:
                        stack.append((u, v, dv + w))
        return D


def tree_distance(t: MetricTree, a, b) -> float:
    return t.distance(a, b)


def random_tree(n: int, rng: np.random.Generator, lengths=(1.0, 1.0), prefix: str = "n") -> MetricTree:
    """Random recursive tree: node ``i`` attaches to a uniform earlier node."""
    if n < 1:
        raise ValueError("a tree needs at least one node")
    lo, hi = lengths
    edges = []
    for i in range(1, n):
        p = int(rng.integers(0, i))
        w = float(lo) if lo == hi else float(rng.uniform(lo, hi))
        edges.append((f"{prefix}{p}", f"{prefix}{i}", w))
    return MetricTree(edges) if edges else MetricTree.single(f"{prefix}0")


def path_tree(n_edges: int, length: float = 1.0, prefix: str = "p") -> MetricTree:
    if n_edges == 0:
        return MetricTree.single(f"{prefix}0")
    return MetricTree([(f"{prefix}{i}", f"{prefix}{i + 1}", length) for i in range(n_edges)])


def star_tree(n_leaves: int, length: float = 1.0) -> MetricTree:
    return MetricTree([("c", f"l{i}", length) for i in range(n_leaves)])


def balanced_tree(depth: int, branching: int, prefix: str = "") -> MetricTree:
    """Complete ``branching``-ary tree; node ids are dotted child-index paths."""
    root = f"{prefix}r"
    edges, frontier = [], [root]
    for _ in range(depth):
        nxt = []
        for v in frontier:
            for j in range(branching):
                c = f"{v}.{j}"
                edges.append((v, c, 1.0))
                nxt.append(c)
        frontier = nxt
    return MetricTree(edges) if edges else MetricTree.single(root)


# -- tree file format -------------------------------------------------------

TREE_HEADER = "#tree"


def parse_tree(text: str) -> MetricTree:
    """Parse ``#tree`` text: one ``parent_id,child_id,edge_length`` line per edge."""
    lines = text.splitlines()
    if not lines or lines[0].strip() != TREE_HEADER:
        raise TreeFormatError(f"missing {TREE_HEADER!r} header", 1)
    edges, where = [], {}
    for lineno, raw in enumerate(lines[1:], start=2):
        line = raw.strip()
        if not line:
            continue
        parts = [p.strip() for p in line.split(",")]
        if len(parts) != 3:
            raise TreeFormatError(f"expected 3 comma-separated fields, got {len(parts)}", lineno)
        p, c, w = parts
        if not p or not c:
            raise TreeFormatError("empty node id", lineno)
        try:
            w = float(w)
        except ValueError:
            raise TreeFormatError(f"edge length {w!r} is not a number", lineno) from None
        if not (w > 0 and np.isfinite(w)):
            raise TreeFormatError(f"edge length must be positive, got {w}", lineno)
        if c in where:
            raise TreeFormatError(f"node {c!r} already has a parent (line {where[c]})", lineno)
        where[c] = lineno
        edges.append((p, c, w))
    if not edges:
        raise TreeFormatError("tree file has no edges", len(lines))
    try:
        return MetricTree(edges)
    except ValueError as exc:
        raise TreeFormatError(str(exc)) from None


def read_tree(path) -> MetricTree:
    return parse_tree(Path(path).read_text())


def format_tree(t: MetricTree) -> str:
    lines = [TREE_HEADER] + [f"{p},{c},{w!r}" for p, c, w in t.edges]
    return "\n".join(lines) + "\n"


def write_tree(t: MetricTree, path) -> None:
    Path(path).write_text(format_tree(t))


# -- Boolean lattice --------------------------------------------------------

def _bits(s) -> np.ndarray:
    a = np.asarray(s)
    if a.ndim != 1 or not np.all((a == 0) | (a == 1)):
        raise ValueError(f"not a bit vector: {s!r}")
    return a.astype(np.int8)


def _pair(s, t):
    a, b = _bits(s), _bits(t)
    if a.shape != b.shape:
        raise ValueError(f"bit vectors differ in length: {a.size} vs {b.size}")
    return a, b


def hamming(s, t) -> int:
    a, b = _pair(s, t)
    return int(np.sum(a != b))


def lattice_order(s, t) -> bool:
    """``s`` entails ``t``: every concept of ``t`` is also in ``s``."""
    a, b = _pair(s, t)
    return bool(np.all(b <= a))


def meet(s, t) -> np.ndarray:
    a, b = _pair(s, t)
    return a & b


def join(s, t) -> np.ndarray:
    a, b = _pair(s, t)
    return a | b


def order_embedding_leq(x, y) -> bool:
    """Order-embedding entailment: ``x`` entails ``y`` iff ``x_i >= y_i`` for all i."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.shape != y.shape:
        raise ValueError("vectors differ in shape")
    return bool(np.all(x >= y))


def all_bit_vectors(n: int) -> np.ndarray:
    """All ``2**n`` indicators, row ``i`` is the binary expansion of ``i`` (LSB first)."""
    idx = np.arange(2 ** n)
    return ((idx[:, None] >> np.arange(n)) & 1).astype(np.int8)


def boolean_to_product(s, shape: ProductShape, radius: float = 1.0, alphas=1.0) -> ProductPoint:
    """Bit ``i`` set -> factor ``i`` at distance ``radius`` along its first axis."""
    a = _bits(s)
    if shape.k < a.size:
        raise ValueError(f"need k >= n factors, got k={shape.k} < n={a.size}")
    if not radius > 0:
        raise ValueError("radius must be positive")
    alphas = np.broadcast_to(np.asarray(alphas, dtype=float), (shape.k,))
    spaces = np.zeros((shape.k, shape.d))
    sa = np.sqrt(alphas[: a.size])
    spaces[: a.size, 0] = a * radius * sinhc(sa * radius)
    return ProductPoint.from_array(spaces, alphas)


def boolean_images(n: int, shape: ProductShape | None = None, radius: float = 1.0) -> tuple[np.ndarray, np.ndarray]:
    """Indicators of the whole cube and their ``(2**n, k, d)`` images."""
    shape = shape or ProductShape(k=n, d=2)
    bits = all_bit_vectors(n)
    pts = np.stack([boolean_to_product(b, shape, radius).spaces for b in bits])
    return bits, pts


def check_order_duality(bits: Sequence) -> bool:
    """Entailment order on indicators agrees with the order-embedding order.

    Also checks the complement map ``1 - chi``: inclusion ``S <= T`` holds iff
    ``1 - chi(S)`` entails ``1 - chi(T)`` as order embeddings.
    """
    for s in bits:
        for t in bits:
            if lattice_order(s, t) != order_embedding_leq(s, t):
                return False
            if lattice_order(t, s) != order_embedding_leq(1 - np.asarray(s), 1 - np.asarray(t)):
                return False
    return True
