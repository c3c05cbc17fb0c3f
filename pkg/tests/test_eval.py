import itertools
import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

import oracles
from hyperprod import eval as ev
from hyperprod import lorentz
from hyperprod.combinatorics import MetricTree, all_bit_vectors, balanced_tree, boolean_to_product, random_tree
from hyperprod.product import ProductPoint, ProductShape


# -- retrieval ----------------------------------------------------------------

def brute_recall(D, pairs, k):
    hits = 0
    for q in range(D.shape[0]):
        order = sorted(range(D.shape[1]), key=lambda c: (D[q, c], c))
        hits += pairs[q] in order[:k]
    return hits / D.shape[0]


def test_recall_matches_sort_oracle(rng):
    for _ in range(20):
        Q = lorentz.expmap0(rng.normal(0, 1, (10, 2, 3)), 1.0)
        C = lorentz.expmap0(rng.normal(0, 1, (10, 2, 3)), 1.0)
        D = ev.product_distances(Q, C)
        pairs = rng.permutation(10).tolist()
        for k in (1, 3, 5):
            assert ev.recall_at_k(Q, C, pairs, k) == brute_recall(D, pairs, k)


def test_recall_trivial_cases(rng):
    C = lorentz.expmap0(rng.normal(0, 1, (6, 2, 2)), 1.0)
    assert ev.recall_at_k(C, C, list(range(6)), 1) == 1.0
    Q = lorentz.expmap0(rng.normal(0, 1, (6, 2, 2)), 1.0)
    assert ev.recall_at_k(Q, C, list(range(6)), 6) == 1.0
    with pytest.raises(ValueError):
        ev.recall_at_k(Q, C, list(range(6)), 0)
    with pytest.raises(ValueError):
        ev.recall_at_k(Q, C, [[]] * 6, 1)


def test_recall_ties_stable():
    D = np.zeros((2, 3))
    assert ev.recall_at_k(None, None, [0, 2], 1, distances=D) == 0.5
    assert ev.recall_at_k(None, None, [[1, 2], 0], 1, distances=D) == 0.5


def test_product_distances_l2(rng):
    Q = lorentz.expmap0(rng.normal(0, 1, (3, 2, 2)), [0.5, 2.0])
    C = lorentz.expmap0(rng.normal(0, 1, (4, 2, 2)), [0.5, 2.0])
    D = ev.product_distances(Q, C, [0.5, 2.0], "l2")
    d = lorentz.dist(Q[:, None], C[None], np.array([0.5, 2.0]))
    np.testing.assert_allclose(D, np.sqrt(np.mean(d ** 2, axis=-1)), rtol=1e-14)


# -- hierarchy ----------------------------------------------------------------

def test_hierarchical_against_bfs():
    rng = np.random.default_rng(3)
    for _ in range(20):
        t = random_tree(int(rng.integers(2, 100)), rng)
        nodes = list(t.nodes)
        for _ in range(30):
            p, q = rng.choice(len(nodes), 2)
            m = ev.hierarchical_metrics(nodes[p], nodes[q], t)
            assert (m.tie, m.lca, m.jaccard, m.p_h, m.r_h) == oracles.hierarchy(t, nodes[p], nodes[q])


def test_sibling_example():
    t = balanced_tree(2, 2)
    m = ev.hierarchical_metrics("r.0.0", "r.0.1", t)
    assert (m.tie, m.lca, m.jaccard) == (2, 1, 0.5)
    same = ev.hierarchical_metrics("r.0.0", "r.0.0", t)
    assert (same.tie, same.lca, same.jaccard, same.p_h, same.r_h) == (0, 0, 1, 1, 1)


def test_ancestor_predictions():
    t = balanced_tree(3, 2)
    for v in t.nodes:
        for a in t.ancestors(v):
            assert ev.hierarchical_metrics(a, v, t).p_h == 1.0
            assert ev.hierarchical_metrics(v, a, t).r_h == 1.0
    with pytest.raises(KeyError):
        ev.hierarchical_metrics("zz", "r", t)


def test_mean_and_join():
    a, b = balanced_tree(1, 2, "a"), balanced_tree(1, 2, "b")
    j = ev.join_taxonomies([a, b])
    assert len(j) == 7 and j.root == "*"
    m = ev.mean_hierarchical(["ar.0", "ar.0"], ["ar.0", "br.1"], j)
    assert m.tie == pytest.approx(2.0)
    with pytest.raises(ValueError):
        ev.mean_hierarchical([], [], j)
    with pytest.raises(ValueError):
        ev.join_taxonomies([a], root="ar")


# -- norms, profiles ----------------------------------------------------------

def test_norm_stats_origin_and_single():
    st0 = ev.norm_stats({"image": np.zeros((3, 2, 2))})
    assert st0["image"].mean == 0.0 and st0["image"].std == 0.0
    x = lorentz.expmap0(np.array([[[0.0, 0.0], [1.3, 0.0]]]), 1.0)
    assert ev.norm_stats({"text": x})["text"].mean == pytest.approx(1.3, rel=1e-12)


def test_norm_stats_match_distance_sum(rng):
    a = np.array([0.3, 1.0, 4.0])
    S = lorentz.expmap0(rng.normal(0, 1, (12, 3, 2)), a)
    st_ = ev.norm_stats({"image": S, "text": S[:5]}, a, bins=7)
    want = [sum(lorentz.distance(lorentz.lift(s[i], a[i]), lorentz.lift(np.zeros(2), a[i])) for i in range(3))
            for s in S]
    assert st_["image"].mean == pytest.approx(np.mean(want), rel=1e-10)
    assert sum(st_["image"].hist) == 12 and sum(st_["text"].hist) == 5
    assert st_["image"].edges == st_["text"].edges and len(st_["image"].edges) == 8


def test_activation_profile_purity():
    N = np.zeros((4, 3, 2))
    N[0, 0, 0] = N[1, 0, 0] = 1.0
    N[2, 2, 0] = N[3, 2, 0] = 1.0
    assert ev.activation_profile(N, {"a": [0, 1]}).purity == 1.0
    p = ev.activation_profile(N, {"a": [0, 1], "b": [2, 3]})
    assert p.purity == 1.0 and p.argmax == {"a": 0, "b": 2}
    assert ev.activation_profile(N, {"a": [0, 1], "b": [0, 1]}).purity == 0.0
    assert ev.activation_profile(np.zeros((2, 3, 2)), {"a": [0]}).argmax == {"a": 0}  # tie -> lowest
    with pytest.raises(ValueError):
        ev.activation_profile(N, {"a": []})
    assert ev.specialization_purity({"a": 0, "b": 0, "c": 1}) == pytest.approx(1 / 3)


# -- compose_max --------------------------------------------------------------

def test_compose_max_basics(rng):
    X = ProductPoint.from_array(rng.normal(0, 1, (3, 2)))
    assert ev.compose_max(X, X) == X
    A = np.zeros((2, 2))
    B = np.zeros((2, 2))
    A[0] = [0.5, 0.1]
    B[1] = [0.0, 0.7]
    Z = ev.compose_max(ProductPoint.from_array(A), ProductPoint.from_array(B))
    np.testing.assert_array_equal(Z.spaces, A + B)
    with pytest.raises(lorentz.GeometryError):
        ev.compose_max(X, ProductPoint.from_array(np.zeros((2, 2))))


@given(st.integers(0, 10_000))
def test_compose_max_algebra(seed):
    rng = np.random.default_rng(seed)
    X, Y, Z = (ProductPoint.from_array(rng.normal(0, 1, (3, 2))) for _ in range(3))
    assert ev.compose_max(X, Y) == ev.compose_max(Y, X)
    assert ev.compose_max(ev.compose_max(X, Y), Z) == ev.compose_max(X, ev.compose_max(Y, Z))
    n = ev.factor_norms(ev.compose_max(X, Y))
    np.testing.assert_array_equal(n, np.maximum(ev.factor_norms(X), ev.factor_norms(Y)))


def test_compose_max_is_boolean_or():
    shape = ProductShape(4, 2)
    bits = all_bit_vectors(4)
    img = [boolean_to_product(b, shape) for b in bits]
    for i, j in itertools.product(range(16), repeat=2):
        want = boolean_to_product(bits[i] | bits[j], shape)
        assert ev.compose_max(img[i], img[j]) == want


# -- cones and reports --------------------------------------------------------

def test_contained_conventions():
    Y = np.array([[[0.5, 0.0]], [[0.0, 0.0]], [[0.5, 0.0]]])
    X = np.array([[[1.5, 0.0]], [[0.3, 0.3]], [[0.5, 0.0]]])
    np.testing.assert_array_equal(ev.contained(X, Y), [True, True, True])
    assert not ev.contained(np.array([[[-0.5, 0.0]]]), Y[:1])[0]
    assert ev.containment_rate([(X, Y), (np.array([[[-0.5, 0.0]]]), Y[:1])]) == 0.75
    with pytest.raises(ValueError):
        ev.containment_rate([])


def test_report_round_trip(tmp_path):
    ns = ev.norm_stats({"image": np.zeros((2, 1, 2)), "text": np.zeros((1, 1, 2))}, bins=3)
    r = ev.MetricsReport({1: 0.5, 5: 1.0}, 1.0, 0.5, 0.3, 0.9, 0.8, ns,
                         {"profile": {"f": [1.0]}, "argmax": {"f": 0}}, 1.0, 0.95, {"metric": "l1"})
    back = ev.MetricsReport.from_json(r.to_json())
    assert back.to_dict() == r.to_dict()
    r.write_histograms(tmp_path / "h.csv")
    assert (tmp_path / "h.csv").read_text().splitlines()[0] == "role,bin_lo,bin_hi,count"
    assert len((tmp_path / "h.csv").read_text().splitlines()) == 1 + 2 * 3
