import itertools
from collections import deque

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from hyperprod import combinatorics as cb
from hyperprod.combinatorics import MetricTree, TreeFormatError
from hyperprod.product import ProductShape, l1_distance


def bfs_distances(tree: MetricTree, src):
    adj = {v: [] for v in tree.nodes}
    for p, c, w in tree.edges:
        adj[p].append((c, w))
        adj[c].append((p, w))
    out, queue = {src: 0.0}, deque([src])
    while queue:
        v = queue.popleft()
        for u, w in adj[v]:
            if u not in out:
                out[u] = out[v] + w
                queue.append(u)
    return out


def test_path_distance():
    t = MetricTree([("r", "u", 1.0), ("u", "v", 1.0)])
    assert cb.tree_distance(t, "r", "v") == 2.0
    assert cb.tree_distance(t, "u", "u") == 0.0
    with pytest.raises(KeyError):
        t.distance("r", "nope")


@pytest.mark.parametrize("seed", range(5))
def test_distances_match_bfs(seed):
    t = cb.random_tree(40, np.random.default_rng(seed), lengths=(0.5, 2.0))
    D = t.distance_matrix()
    for v in t.nodes[::7]:
        ref = bfs_distances(t, v)
        for u in t.nodes:
            assert t.distance(v, u) == pytest.approx(ref[u], abs=1e-12)
            assert D[t.index[v], t.index[u]] == pytest.approx(ref[u], abs=1e-12)


def test_four_point_condition(rng):
    t = cb.random_tree(25, rng, lengths=(0.5, 2.0))
    D = t.distance_matrix()
    for a, b, c, e in itertools.islice(itertools.combinations(range(len(t)), 4), 2000):
        s = sorted([D[a, b] + D[c, e], D[a, c] + D[b, e], D[a, e] + D[b, c]])
        assert s[2] - s[1] <= 1e-9


def test_tree_validation():
    with pytest.raises(ValueError):
        MetricTree([("a", "b", 0.0)])
    with pytest.raises(ValueError):
        MetricTree([("a", "b", 1.0), ("c", "b", 1.0)])
    with pytest.raises(ValueError):
        MetricTree([("a", "b", 1.0), ("b", "a", 1.0)])
    with pytest.raises(ValueError):
        MetricTree([("a", "b", 1.0), ("c", "d", 1.0)])


def test_balanced_tree_counts():
    t = cb.balanced_tree(2, 3)
    assert len(t) == 13 and len(t.leaves()) == 9


def test_tree_file_round_trip(tmp_path, rng):
    t = cb.random_tree(30, rng, lengths=(0.5, 2.0))
    p = tmp_path / "t.tree"
    cb.write_tree(t, p)
    back = cb.read_tree(p)
    assert back.edges == t.edges and back.root == t.root


@pytest.mark.parametrize("text,line", [
    ("a,b,1\n", 1),
    ("#tree\na,b,1\nb,c\n", 3),
    ("#tree\na,b,x\n", 2),
    ("#tree\na,b,-1\n", 2),
    ("#tree\na,b,1\nc,b,1\n", 3),
])
def test_tree_parse_errors(text, line):
    with pytest.raises(TreeFormatError) as e:
        cb.parse_tree(text)
    assert e.value.lineno == line
    assert f"line {line}" in str(e.value)


def test_hamming_and_order():
    assert cb.hamming([0, 1, 1], [1, 1, 0]) == 2
    assert cb.hamming([1, 0], [1, 0]) == 0
    # {dog, car} entails {dog}
    assert cb.lattice_order([1, 1], [1, 0])
    assert not cb.lattice_order([0, 1], [1, 0]) and not cb.lattice_order([1, 0], [0, 1])
    assert cb.lattice_order([1, 0, 1], [1, 0, 1])
    with pytest.raises(ValueError):
        cb.hamming([0, 1], [0, 1, 1])
    with pytest.raises(ValueError):
        cb.hamming([0, 2], [0, 1])


def test_meet_join():
    s, t = [0, 1, 1], [1, 1, 0]
    assert cb.meet(s, t).tolist() == [0, 1, 0]
    assert cb.join(s, t).tolist() == [1, 1, 1]
    assert cb.meet(s, s).tolist() == s == cb.join(s, s).tolist()


bits = st.lists(st.integers(0, 1), min_size=5, max_size=5)


@given(bits, bits)
def test_lattice_laws(s, t):
    assert cb.join(s, cb.meet(s, t)).tolist() == s
    assert cb.meet(s, cb.join(s, t)).tolist() == s
    assert cb.hamming(s, t) == cb.hamming(t, s) == int(np.abs(np.subtract(s, t)).sum())


def test_order_embedding():
    assert cb.order_embedding_leq([2, 3], [1, 3]) and not cb.order_embedding_leq([1, 3], [2, 3])
    assert cb.order_embedding_leq([1.5, 2], [1.5, 2])


@given(st.lists(st.floats(-5, 5), min_size=3, max_size=3), st.lists(st.floats(-5, 5), min_size=3, max_size=3))
def test_order_embedding_max_identity(x, y):
    assert cb.order_embedding_leq(x, y) == bool(np.array_equal(np.maximum(x, y), x))


def test_boolean_to_product_examples():
    shape = ProductShape(2, 2)
    z = cb.boolean_to_product([0, 0], shape)
    assert np.all(z.spaces == 0) and l1_distance(z, z) == 0
    a, b = cb.boolean_to_product([1, 0], shape), cb.boolean_to_product([0, 1], shape)
    assert l1_distance(a, b) == pytest.approx(2.0, abs=1e-12)
    with pytest.raises(ValueError):
        cb.boolean_to_product([1, 0, 1], shape)


@pytest.mark.parametrize("n", range(1, 7))
def test_boolean_isometry_exhaustive(n):
    bits, pts = cb.boolean_images(n)
    from hyperprod.product import factor_dists
    l1 = factor_dists(pts[:, None], pts[None], 1.0).sum(-1)
    ham = np.abs(bits[:, None].astype(int) - bits[None]).sum(-1)
    assert np.max(np.abs(l1 - ham)) <= 1e-9


@pytest.mark.parametrize("n", range(1, 7))
def test_order_duality(n):
    assert cb.check_order_duality(cb.all_bit_vectors(n))
