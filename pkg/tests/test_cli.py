import csv
import json
import xml.etree.ElementTree as ET
from pathlib import Path

import numpy as np
import pytest

from hyperprod import cli, io
from hyperprod import learning as L
from hyperprod.experiment import make_split
from hyperprod.synthetic import read_dataset, read_families

SVG = "{http://www.w3.org/2000/svg}"


def run(argv, capsys=None):
    code = cli.main([str(a) for a in argv])
    return code


def only_run(out: Path) -> Path:
    (d,) = [p for p in out.iterdir() if p.is_dir()]
    return d


@pytest.fixture
def small_gen(tmp_path):
    cfg = tmp_path / "gen.cfg"
    cfg.write_text("families=2\ndepth=1\nbranching=2\ninstances=60\n")
    assert run(["gen", "--config", cfg, "--seed", 1, "--out", tmp_path / "g"]) == 0
    return only_run(tmp_path / "g")


def test_gen_summary_and_files(tmp_path, capsys):
    assert run(["gen", "--seed", 0, "--out", tmp_path]) == 0
    d = only_run(tmp_path)
    summary = json.loads(capsys.readouterr().out.strip().splitlines()[-1])
    assert summary == {f"f{i}": {"nodes": 13, "leaves": 9} for i in range(4)}
    m = io.RunManifest.read(d / "manifest.json")
    assert m.command == "gen" and m.seed == 0 and m.config["deterministic"] is True
    assert sorted(m.outputs) == ["dataset.jsonl", "families.json"]
    assert len(read_dataset(d / "dataset.jsonl")) == 2200


def test_gen_byte_identical(tmp_path):
    for name in ("a", "b"):
        assert run(["gen", "--seed", 5, "--out", tmp_path / name]) == 0
    a, b = only_run(tmp_path / "a"), only_run(tmp_path / "b")
    for f in ("dataset.jsonl", "families.json"):
        assert (a / f).read_bytes() == (b / f).read_bytes()


def test_unknown_config_key(tmp_path, capsys):
    cfg = tmp_path / "bad.cfg"
    cfg.write_text("families=2\nflavour=3\n")
    assert run(["gen", "--config", cfg, "--out", tmp_path]) == cli.EXIT_INPUT
    assert "flavour" in capsys.readouterr().err


def test_embed_tree(tmp_path, capsys):
    tree = tmp_path / "t.txt"
    tree.write_text("#tree\na,b,1\nb,c,1\nc,d,1\n")
    assert run(["embed-tree", tree, "--epsilon", 0.1, "--out", tmp_path / "o"]) == 0
    d = only_run(tmp_path / "o")
    q = json.loads((d / "quality.json").read_text())
    assert q["passed"] and q["lambda"] <= 1.1 and q["nodes"] == 4
    dump = io.read_dump(d / "embedding.txt")
    assert set(dump.points) == {"a", "b", "c", "d"} and dump.k == 1 and dump.taus is not None

    two = tmp_path / "two.txt"
    two.write_text("#tree\nx,y,2.5\n")
    assert run(["embed-tree", two, "--out", tmp_path / "p"]) == 0
    q2 = json.loads((only_run(tmp_path / "p") / "quality.json").read_text())
    assert q2["lambda"] == pytest.approx(1.0, abs=1e-9)


def test_embed_tree_malformed(tmp_path, capsys):
    tree = tmp_path / "t.txt"
    tree.write_text("#tree\na,b,1\nb,c,one\n")
    assert run(["embed-tree", tree, "--out", tmp_path]) == cli.EXIT_INPUT
    assert "line 3" in capsys.readouterr().err
    assert run(["embed-tree", tmp_path / "missing.txt", "--out", tmp_path]) == cli.EXIT_INPUT


def _train(tmp_path, gen_dir, extra="", name="t"):
    cfg = tmp_path / f"{name}.cfg"
    cfg.write_text("k=2\nd=2\nbatch_size=16\nsteps=20\nlr=0.1\nholdout=10\n" + extra)
    code = run(["train", gen_dir / "dataset.jsonl", "--config", cfg, "--out", tmp_path / name])
    return code, only_run(tmp_path / name) if code == 0 else None


def test_train_outputs(tmp_path, small_gen):
    code, d = _train(tmp_path, small_gen)
    assert code == 0
    for f in ("checkpoint.txt", "trace.csv", "metrics.json", "histograms.csv", "manifest.json"):
        assert (d / f).exists()
    rows = list(csv.DictReader((d / "trace.csv").open()))
    assert len(rows) == 20 and set(rows[0]) == {"step", "loss", "contrastive", "entailment"}
    metrics = json.loads((d / "metrics.json").read_text())
    for key in ("recall_at_k", "tie", "lca", "jaccard", "p_h", "r_h", "norm_stats",
                "activation_profile", "specialization_purity", "containment_rate"):
        assert key in metrics
    assert set(metrics["norm_stats"]) == {"image", "text", "image_box", "text_box"}
    m = io.RunManifest.read(d / "manifest.json")
    assert m.config["holdout"] == 10 and m.config["k"] == 2


def test_train_deterministic_trace(tmp_path, small_gen):
    _, a = _train(tmp_path, small_gen, name="a")
    _, b = _train(tmp_path, small_gen, name="b")
    assert (a / "trace.csv").read_bytes() == (b / "trace.csv").read_bytes()
    assert (a / "checkpoint.txt").read_bytes() == (b / "checkpoint.txt").read_bytes()


def test_train_zero_steps_is_init(tmp_path, small_gen):
    code, d = _train(tmp_path, small_gen, "steps=0\n", "z")
    assert code == 0
    table, scalars = io.read_checkpoint(d / "checkpoint.txt")
    fams = read_families(small_gen / "families.json")
    split = make_split(fams, read_dataset(small_gen / "dataset.jsonl"), 10)
    t0, s0 = L.init_state(split.train, L.TrainConfig(k=2, d=2))
    assert table.tokens == t0.tokens
    np.testing.assert_allclose(table.weights, t0.weights, rtol=1e-12, atol=1e-15)
    np.testing.assert_array_equal(scalars.vector(), s0.vector())


def test_train_bad_inputs(tmp_path, small_gen, capsys):
    code, _ = _train(tmp_path, small_gen, "momentun=0.5\n", "x")
    assert code == cli.EXIT_INPUT and "momentun" in capsys.readouterr().err
    code, _ = _train(tmp_path, small_gen, "holdout=60\n", "y")
    assert code == cli.EXIT_INPUT
    bad = tmp_path / "bad.jsonl"
    bad.write_text("{not json\n")
    assert run(["train", bad, "--families", small_gen / "families.json", "--out", tmp_path]) == cli.EXIT_INPUT


@pytest.mark.parametrize("argv,key", [
    (["boolean-isometry", "--n", 4], "max_deviation"),
    (["delta-growth", "--sizes", "2,3,4"], "delta"),
    (["obstruction", "--starts", 3], "max_distance"),
])
def test_diagnose(tmp_path, capsys, argv, key):
    assert run(["diagnose", *argv, "--out", tmp_path]) == 0
    rep = json.loads((only_run(tmp_path) / "report.json").read_text())
    assert rep["passed"] and key in rep
    assert capsys.readouterr().out.strip().splitlines()[-1].startswith("pass ")


def test_diagnose_bad_args(tmp_path):
    assert run(["diagnose", "delta-growth", "--sizes", "4,x", "--out", tmp_path]) == cli.EXIT_INPUT
    assert run(["diagnose", "boolean-isometry", "--n", 9, "--out", tmp_path]) == cli.EXIT_INPUT


def test_diagnose_gradcheck_small(tmp_path):
    assert run(["diagnose", "gradcheck", "--repeats", 1, "--out", tmp_path]) == 0
    rep = json.loads((only_run(tmp_path) / "report.json").read_text())
    assert rep["n_configs"] == 18 and rep["max_rel_error"] <= 1e-4


def test_plot_disk(tmp_path, small_gen):
    _, d = _train(tmp_path, small_gen)
    assert run(["plot", d / "checkpoint.txt", "--factors", "0", "--out", tmp_path / "p"]) == 0
    svg = ET.parse(only_run(tmp_path / "p") / "factor0.svg").getroot()
    marks = [e for e in svg.iter(f"{SVG}circle") if e.get("class") == "entity"]
    table, _ = io.read_checkpoint(d / "checkpoint.txt")
    assert len(marks) == len(table.tokens)
    assert run(["plot", d / "checkpoint.txt", "--factors", "5", "--out", tmp_path / "q"]) == cli.EXIT_INPUT


def test_plot_bars(tmp_path, small_gen):
    code, d = _train(tmp_path, small_gen, "d=3\n", "b3")
    assert code == 0
    assert run(["plot", d / "checkpoint.txt", "--out", tmp_path / "p"]) == 0
    out = only_run(tmp_path / "p")
    assert sorted(p.name for p in out.glob("*.svg")) == ["factor0.svg", "factor1.svg"]
    rects = [e for e in ET.parse(out / "factor0.svg").getroot().iter(f"{SVG}rect")]
    assert len(rects) == len(io.read_checkpoint(d / "checkpoint.txt")[0].tokens)


def test_poincare_map():
    np.testing.assert_array_equal(cli.poincare(np.zeros((1, 2)), 1.0), np.zeros((1, 2)))
    r = np.array([[0.1, 0.0], [1.0, 0.0], [10.0, 0.0], [1000.0, 0.0]])
    for a in (0.1, 1.0, 10.0):
        u = cli.poincare(r, a)[:, 0] * np.sqrt(a)
        assert np.all(np.diff(u) > 0) and np.all(u < 1.0)
    svg = cli.disk_svg(["o"], np.zeros((1, 2)), 1.0, size=200)
    (mark,) = [e for e in svg.iter("circle") if e.get("class") == "entity"]
    assert float(mark.get("cx")) == 100.0 and float(mark.get("cy")) == 100.0


def test_helpers():
    assert cli.boolean_isometry(3) <= 1e-9
    d = cli.delta_growth([2, 4])
    assert d[1] > d[0]
