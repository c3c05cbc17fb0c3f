import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from hyperprod import lorentz
from hyperprod.lorentz import GeometryError, exp0
from hyperprod.product import (ProductPoint, ProductShape, avg_distance, factor_dists, l1_distance,
                               l2_distance, slice_and_lift)


def radial_pair(dists):
    """Product points whose factor distances are exactly ``dists``."""
    X = ProductPoint.origin(ProductShape(len(dists), 2))
    Y = ProductPoint(tuple(exp0([r, 0.0]) for r in dists))
    return X, Y


def test_shape_defaults_and_validation():
    s = ProductShape()
    assert (s.k, s.d, s.total) == (64, 8, 512)
    with pytest.raises(ValueError):
        ProductShape(0, 2)


def test_l1_and_avg_examples():
    X, Y = radial_pair([0.3, 0.7])
    assert l1_distance(X, Y) == pytest.approx(1.0, abs=1e-15)
    assert avg_distance(X, Y) == pytest.approx(0.5, abs=1e-15)
    assert l1_distance(X, X) == 0.0 and avg_distance(X, X) == 0.0 and l2_distance(X, X) == 0.0


def test_l2_pythagorean():
    X, Y = radial_pair([3.0, 4.0])
    assert l2_distance(X, Y) == pytest.approx(5.0, rel=1e-12)


def test_k1_reduction():
    X, Y = radial_pair([0.9])
    d = lorentz.distance(X[0], Y[0])
    assert l1_distance(X, Y) == avg_distance(X, Y) == l2_distance(X, Y) == d


def test_shape_mismatch():
    X, _ = radial_pair([1.0, 1.0])
    Z, _ = radial_pair([1.0])
    with pytest.raises(GeometryError):
        l1_distance(X, Z)
    A = ProductPoint.from_array(np.zeros((2, 2)), [1.0, 2.0])
    with pytest.raises(GeometryError):
        l2_distance(X, A)


def test_slice_and_lift_examples():
    shape = ProductShape(2, 1)
    P = slice_and_lift([0.5, -0.5], shape)
    assert np.allclose(P.factor_norms, [0.5, 0.5])
    assert slice_and_lift(np.zeros(6), ProductShape(3, 2)) == ProductPoint.origin(ProductShape(3, 2))
    f = np.array([0.2, -0.1, 0.4, 0.3])
    a = slice_and_lift(f, ProductShape(2, 2), scale=1.0).factor_norms
    b = slice_and_lift(f, ProductShape(2, 2), scale=2.0).factor_norms
    assert np.allclose(b, 2 * a)
    with pytest.raises(GeometryError):
        slice_and_lift(np.zeros(3), shape)


def test_slicing_is_contiguous():
    P = slice_and_lift(np.arange(6, dtype=float) * 0.1, ProductShape(3, 2))
    for i in range(3):
        assert np.allclose(lorentz.log0(P[i]), [0.2 * i, 0.2 * i + 0.1])


pts = arrays(float, (3, 2), elements=st.floats(-3, 3))


@given(pts, pts, pts)
def test_metric_axioms(a, b, c):
    X, Y, Z = (ProductPoint.from_array(v, [0.5, 1.0, 2.0]) for v in (a, b, c))
    for f in (l1_distance, l2_distance):
        assert f(X, Y) == f(Y, X)
        assert f(X, X) == 0.0
        assert f(X, Z) <= f(X, Y) + f(Y, Z) + 1e-9
    assert l2_distance(X, Y) <= l1_distance(X, Y) + 1e-12
    assert avg_distance(X, Y) * 3 == pytest.approx(l1_distance(X, Y))


def test_metric_axioms_bulk(rng):
    alphas = np.array([0.1, 1.0, 10.0])
    X, Y, Z = (rng.normal(0, 1, (1000, 3, 2)) for _ in range(3))
    dxy, dyz, dxz = (factor_dists(P, Q, alphas) for P, Q in ((X, Y), (Y, Z), (X, Z)))
    assert np.all(dxz.sum(-1) <= dxy.sum(-1) + dyz.sum(-1) + 1e-9)
    l2 = lambda D: np.sqrt((D ** 2).sum(-1))
    assert np.all(l2(dxz) <= l2(dxy) + l2(dyz) + 1e-9)


@given(pts, pts, arrays(float, 2, elements=st.floats(-3, 3)))
def test_l1_decomposes(a, b, new):
    X, Y = ProductPoint.from_array(a), ProductPoint.from_array(b)
    a2 = a.copy()
    a2[1] = new
    X2 = ProductPoint.from_array(a2)
    delta = lorentz.distance(X2[1], Y[1]) - lorentz.distance(X[1], Y[1])
    assert l1_distance(X2, Y) - l1_distance(X, Y) == pytest.approx(delta, abs=1e-9)
