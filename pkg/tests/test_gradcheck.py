import math

import numpy as np

from hyperprod import gradcheck as gc
from hyperprod import learning as L


def test_random_config_shapes():
    rng = np.random.default_rng(0)
    batch, table, s = gc.random_config(rng, 2, 3, 10.0, batch_size=3, width=2)
    assert batch.size == 3 and batch.image.shape == (3, 2)
    assert table.weights.shape == (len(L.ROLES) * 6, 6)
    used = np.concatenate([getattr(batch, r).ravel() for r in L.ROLES])
    assert len(set(used.tolist())) == used.size
    np.testing.assert_allclose(s.alphas, [10.0, 10.0])


def test_check_detects_wrong_gradient(monkeypatch):
    rng = np.random.default_rng(1)
    cfg = gc.random_config(rng, 1, 2, 1.0)
    err, n, _ = gc.check(*cfg)
    assert err < 1e-4 and n > 0
    real = L.loss_gradient

    def broken(*a, **kw):
        f, g = real(*a, **kw)
        g.table[0, 0] *= 1.5
        return f, g

    monkeypatch.setattr(gc, "loss_gradient", broken)
    err, _, where = gc.check(*cfg)
    assert err > 0.1 and where == "table(0, 0)"


def test_check_skips_clamped_alpha():
    rng = np.random.default_rng(2)
    batch, table, s = gc.random_config(rng, 2, 2, 1.0)
    s.log_alpha[0] = math.log(L.ALPHA_MAX)
    err, n, _ = gc.check(batch, table, s)
    _, n_all, _ = gc.check(*gc.random_config(np.random.default_rng(2), 2, 2, 1.0))
    assert err < 1e-4 and n < n_all + 1


def test_coordinate_sampling():
    rng = np.random.default_rng(3)
    cfg = gc.random_config(rng, 8, 8, 1.0, batch_size=2, width=1)
    _, n, _ = gc.check(*cfg, max_coords=20, rng=np.random.default_rng(0))
    assert n <= 20 + 3 + 8


def test_small_sweep_passes():
    rep = gc.sweep(repeats=1, metric="l2", max_coords=64)
    assert rep.n_configs == len(gc.GRID_K) * len(gc.GRID_D) * len(gc.GRID_ALPHA)
    assert rep.passed(1e-4), rep.to_dict()["configs"]
    assert set(rep.to_dict()) == {"n_configs", "max_rel_error", "seconds", "configs"}


def test_configs_keep_away_from_kinks():
    rng = np.random.default_rng(4)
    for _ in range(10):
        cfg = gc.random_config(rng, 2, 2, 1.0)
        assert gc.kink_margin(*cfg) >= gc.KINK_MARGIN


def test_kink_margin_sees_aperture_clamp():
    from hyperprod.product import ProductShape
    shape = ProductShape(1, 2)
    s = L.TrainScalars.initial(shape, c_init=1.0)
    r = np.arcsinh(2 * s.K)  # apex space norm exactly 2K: the arcsin argument is 1
    W = np.array([[3 * r, 0.0], [r, 0.0], [3 * r, 0.0], [r, 0.0]])
    table = L.EmbeddingTable(["a", "b", "c", "e"], shape, W)
    assert gc.kink_margin(L.Batch([0], [1], [2], [3]), table, s) < 1e-12
    W[:, 1] = [0.3, 0.0, 0.3, 0.0]
    W[1, 0] = W[3, 0] = 2 * r
    assert gc.kink_margin(L.Batch([0], [1], [2], [3]), L.EmbeddingTable(["a", "b", "c", "e"], shape, W), s) > 1e-3
