import numpy as np
import pytest

from hyperprod import experiment as xp
from hyperprod.learning import TrainConfig


@pytest.fixture(scope="module")
def tiny():
    data = xp.DataConfig(families=2, depth=1, branching=2, instances=40, holdout=10)
    return xp.run(data, TrainConfig(k=2, d=2, steps=40, batch_size=16, lr=0.1))


def test_generate_sizes():
    fams, recs = xp.generate(xp.DataConfig(families=3, depth=1, branching=2, instances=20, holdout=5), 0)
    assert len(fams) == 3 and len(recs) == 25


def test_data_config_validation():
    with pytest.raises(ValueError):
        xp.DataConfig(holdout=-1)
    with pytest.raises(ValueError):
        xp.DataConfig(instances=0)


def test_split_shapes():
    fams, recs = xp.generate(xp.DataConfig(families=2, depth=1, branching=2, instances=30, holdout=6), 1)
    s = xp.make_split(fams, recs, 6)
    assert len(s.train) == 30 and len(s.test) == 6
    assert s.test_records == recs[30:]
    full = xp.make_split(fams, recs, 0)
    assert len(full.test) == len(full.train) == 36
    with pytest.raises(ValueError):
        xp.make_split(fams, recs, 36)


def test_text_equivalence_pairs():
    fams, recs = xp.generate(xp.DataConfig(families=2, depth=1, branching=2, instances=30, holdout=0), 2)
    pairs = xp.text_equivalence_pairs(recs)
    for i, group in enumerate(pairs):
        assert i in group
        assert all(recs[j].text_concepts == recs[i].text_concepts for j in group)


def test_report_fields(tiny):
    r = tiny.report
    assert set(r.recall_at_k) == {1, 5}
    assert 0 <= r.containment_rate <= 1 and 0 <= r.specialization_purity <= 1
    assert set(r.norm_stats) == {"image", "text", "image_box", "text_box"}
    assert set(r.activation_profile["argmax"]) == {"f0", "f1"}
    assert set(r.extras["containment_by_pair"]) == {"image-text", "image_box-text_box",
                                                     "image-image_box", "text-text_box"}
    for k in (1, 5):
        assert r.recall_at_k[k] >= r.extras["recall_at_k_strict"][k]
    assert 0 <= r.jaccard <= 1 and r.tie >= 0


def test_run_deterministic(tiny):
    data = xp.DataConfig(families=2, depth=1, branching=2, instances=40, holdout=10)
    again = xp.run(data, TrainConfig(k=2, d=2, steps=40, batch_size=16, lr=0.1))
    assert again.result.trace == tiny.result.trace
    assert again.report.to_json() == tiny.report.to_json()


def test_compositional_run():
    data = xp.DataConfig(families=2, depth=1, branching=2, instances=30, holdout=5, encoder="compositional")
    out = xp.run(data, TrainConfig(k=2, d=2, steps=10, batch_size=8))
    assert np.isfinite(out.report.containment_rate)
    assert all(t.split("|")[0] in ("image", "text") for t in out.result.table.tokens)
