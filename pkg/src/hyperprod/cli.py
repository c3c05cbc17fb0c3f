"""Command-line entry point.

Every command writes its outputs and a ``manifest.json`` into one run
directory ``<out>/<timestamp>-seed<N>``.  Exit codes: 0 success, 1 a checked
contract failed, 2 bad input (arguments, config keys, file contents).
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import math
import sys
import time
import xml.etree.ElementTree as ET
from pathlib import Path

import numpy as np

from . import __version__, combinatorics, constructive, gradcheck, io, lorentz, synthetic
from . import experiment as xp
from .learning import DivergenceError, NonFiniteError, TrainConfig, train
from .product import factor_dists

EXIT_OK, EXIT_CONTRACT, EXIT_INPUT = 0, 1, 2


class InputError(Exception):
    pass


class ContractError(Exception):
    pass


@dataclasses.dataclass
class GenConfig:
    families: int = 4
    depth: int = 2
    branching: int = 3
    concepts_per_instance: int = 2
    instances: int = 2200
    generalization: int = 1


TRAIN_EXTRA = {"holdout": int, "encoder": str}


def _load_config(args, schema: dict) -> dict:
    if not args.config:
        return {}
    try:
        return io.read_config(args.config, schema)
    except OSError as exc:
        raise InputError(f"cannot read config: {exc}") from None


def _start(args, command: str):
    out = io.run_dir(args.out, args.seed)
    return out, time.perf_counter()


def _finish(out: Path, t0: float, command: str, config: dict, args, inputs=(), outputs=(), summary=None):
    cfg = dict(config, deterministic=True)
    m = io.RunManifest(command, cfg, args.seed, __version__, [str(p) for p in inputs],
                       [str(Path(p).name) for p in outputs], time.perf_counter() - t0, summary or {})
    m.write(out)
    print(f"run directory: {out}")


# -- gen --------------------------------------------------------------------

def cmd_gen(args) -> int:
    raw = _load_config(args, io.schema_of(GenConfig))
    try:
        cfg = GenConfig(**raw)
        fams = synthetic.gen_families(cfg.families, cfg.depth, cfg.branching, args.seed)
        recs = synthetic.gen_instances(fams, cfg.instances, cfg.concepts_per_instance, args.seed,
                                       cfg.generalization)
    except ValueError as exc:
        raise InputError(str(exc)) from None
    out, t0 = _start(args, "gen")
    synthetic.write_dataset(recs, out / "dataset.jsonl")
    synthetic.write_families(fams, out / "families.json")
    summary = {"families": {f.family_id: {"nodes": len(f.tree), "leaves": len(f.leaves)} for f in fams},
               "instances": len(recs)}
    _finish(out, t0, "gen", dataclasses.asdict(cfg), args, [],
            ["dataset.jsonl", "families.json"], summary)
    print(json.dumps(summary["families"]))
    return EXIT_OK


# -- embed-tree -------------------------------------------------------------

def cmd_embed_tree(args) -> int:
    try:
        tree = combinatorics.read_tree(args.tree)
    except combinatorics.TreeFormatError as exc:
        raise InputError(f"{args.tree}: {exc}") from None
    except OSError as exc:
        raise InputError(str(exc)) from None
    out, t0 = _start(args, "embed-tree")
    try:
        emb = constructive.sarkar_embed(tree, args.epsilon, tau0=args.tau)
        q = emb.quality_
        pts = emb.points()
    except (constructive.EmbeddingError, OverflowError, ValueError) as exc:
        raise ContractError(str(exc)) from None
    dump = io.EmbeddingDump({v: p.space[None, :] for v, p in pts.items()}, np.ones(1), np.array([emb.tau]))
    io.write_dump(dump, out / "embedding.txt")
    report = {"lambda": q.lambda_, "tau": emb.tau, "epsilon": args.epsilon,
              "worst_pair": list(q.worst_pair) if q.worst_pair else None, "nodes": len(tree),
              "passed": q.lambda_ <= 1 + args.epsilon}
    (out / "quality.json").write_text(json.dumps(report, indent=1) + "\n")
    _finish(out, t0, "embed-tree", {"epsilon": args.epsilon, "tau": args.tau}, args, [args.tree],
            ["embedding.txt", "quality.json"], report)
    print(json.dumps(report))
    return EXIT_OK if report["passed"] else EXIT_CONTRACT


# -- train ------------------------------------------------------------------

def cmd_train(args) -> int:
    schema = dict(io.schema_of(TrainConfig), **TRAIN_EXTRA)
    raw = _load_config(args, schema)
    raw["seed"] = args.seed if args.seed_given else raw.get("seed", args.seed)
    extra = {k: raw.pop(k) for k in TRAIN_EXTRA if k in raw}
    holdout = extra.get("holdout", 0)
    encoder = extra.get("encoder", "entity")
    try:
        cfg = TrainConfig(**raw)
        recs = synthetic.read_dataset(args.dataset)
        fam_path = Path(args.families) if args.families else Path(args.dataset).with_name("families.json")
        fams = synthetic.read_families(fam_path)
        for r in recs:
            synthetic.check_record(r, fams)
        split = xp.make_split(fams, recs, holdout, encoder)
    except (ValueError, KeyError, OSError) as exc:
        raise InputError(str(exc)) from None
    args.seed = cfg.seed
    out, t0 = _start(args, "train")
    try:
        res = train(split.train, cfg)
    except DivergenceError as exc:
        io.write_trace(exc.trace, out / "trace.csv")
        raise ContractError(str(exc)) from None
    io.write_checkpoint(res.table, res.scalars, out / "checkpoint.txt")
    io.write_trace(res.trace, out / "trace.csv", res.parts)
    try:
        report = xp.evaluate(split, res.table, res.scalars, cfg.metric)
    except NonFiniteError as exc:
        raise ContractError(str(exc)) from None
    report.write(out / "metrics.json")
    report.write_histograms(out / "histograms.csv")
    summary = {"final_loss": res.trace[-1] if res.trace else None,
               "recall_at_1": report.recall_at_k.get(1), "containment_rate": report.containment_rate,
               "specialization_purity": report.specialization_purity}
    _finish(out, t0, "train", dict(dataclasses.asdict(cfg), holdout=holdout, encoder=encoder), args,
            [args.dataset, fam_path], ["checkpoint.txt", "trace.csv", "metrics.json", "histograms.csv"],
            summary)
    print(json.dumps(summary))
    return EXIT_OK


# -- diagnose ---------------------------------------------------------------

def boolean_isometry(n: int) -> float:
    """Max |l1 distance - Hamming distance| over all pairs of the n-cube."""
    bits, pts = combinatorics.boolean_images(n)
    ham = np.abs(bits[:, None, :].astype(int) - bits[None, :, :]).sum(-1)
    l1 = factor_dists(pts[:, None], pts[None, :], 1.0).sum(-1)
    return float(np.max(np.abs(l1 - ham)))


def delta_growth(sizes) -> list[float]:
    return [constructive.gromov_delta(constructive.grid_metric(m)) for m in sizes]


def cmd_diagnose(args) -> int:
    out, t0 = _start(args, f"diagnose {args.check}")
    if args.check == "obstruction":
        rep = constructive.midpoint_obstruction_witness(args.dim, args.alpha, args.starts, seed=args.seed)
        ok = rep.n_feasible > 0 and rep.max_distance <= args.bound
        res = {"max_distance": rep.max_distance, "n_feasible": rep.n_feasible, "n_starts": rep.n_starts,
               "bound": args.bound, "residuals": np.asarray(rep.residuals).tolist()}
        config = {"dim": args.dim, "alpha": args.alpha, "starts": args.starts, "bound": args.bound}
    elif args.check == "delta-growth":
        try:
            sizes = [int(s) for s in args.sizes.split(",")]
        except ValueError:
            raise InputError(f"--sizes must be comma-separated integers, got {args.sizes!r}") from None
        if any(m < 1 for m in sizes):
            raise InputError("grid sizes must be positive")
        deltas = delta_growth(sizes)
        ok = all(b > a for a, b in zip(deltas, deltas[1:]))
        res = {"sizes": sizes, "delta": deltas}
        config = {"sizes": sizes}
    elif args.check == "boolean-isometry":
        if not 1 <= args.n <= 6:
            raise InputError("--n must be in 1..6")
        dev = boolean_isometry(args.n)
        ok = dev <= 1e-9
        res = {"n": args.n, "max_deviation": dev}
        config = {"n": args.n}
    else:
        rep = gradcheck.sweep(args.repeats, args.seed, args.metric)
        ok = rep.passed(args.tol)
        res = {"n_configs": rep.n_configs, "max_rel_error": rep.max_rel_error, "tol": args.tol,
               "seconds": rep.seconds}
        config = {"repeats": args.repeats, "metric": args.metric, "tol": args.tol}
        (out / "gradcheck.json").write_text(json.dumps(rep.to_dict(), indent=1) + "\n")
    res["passed"] = bool(ok)
    (out / "report.json").write_text(json.dumps(res, indent=1) + "\n")
    _finish(out, t0, f"diagnose {args.check}", config, args, [], ["report.json"], res)
    print(("pass " if ok else "FAIL ") + json.dumps({k: v for k, v in res.items() if k != "residuals"}))
    return EXIT_OK if ok else EXIT_CONTRACT


# -- plot -------------------------------------------------------------------

def poincare(spaces: np.ndarray, alpha: float) -> np.ndarray:
    """Lorentz space coordinates -> Poincare ball of radius ``alpha**-1/2``."""
    x0 = lorentz.time_coord(spaces, alpha)
    return spaces / (1.0 + math.sqrt(alpha) * x0)[..., None]


def _svg(width, height):
    return ET.Element("svg", xmlns="http://www.w3.org/2000/svg", width=str(width), height=str(height),
                      viewBox=f"0 0 {width} {height}")


def disk_svg(labels, pts: np.ndarray, alpha: float, size: int = 480) -> ET.Element:
    svg = _svg(size, size)
    r0, c = 0.45 * size, size / 2
    ET.SubElement(svg, "circle", cx=str(c), cy=str(c), r=str(r0), fill="none", stroke="black")
    P = poincare(pts, alpha) * math.sqrt(alpha)  # unit disk regardless of curvature
    for lab, (u, v) in zip(labels, P):
        x, y = c + r0 * u, c - r0 * v
        ET.SubElement(svg, "circle", {"class": "entity", "cx": f"{x:.3f}", "cy": f"{y:.3f}", "r": "3"})
        t = ET.SubElement(svg, "text", x=f"{x + 4:.3f}", y=f"{y - 4:.3f}", **{"font-size": "8"})
        t.text = str(lab)
    return svg


def bars_svg(labels, norms: np.ndarray, width: int = 640) -> ET.Element:
    bar = 12
    height = bar * len(labels) + 20
    svg = _svg(width, height)
    top = max(float(np.max(norms)), 1e-12) if len(norms) else 1.0
    for i, (lab, v) in enumerate(zip(labels, norms)):
        y = 10 + i * bar
        ET.SubElement(svg, "rect", {"class": "entity", "x": "200", "y": str(y),
                                    "width": f"{400 * v / top:.3f}", "height": str(bar - 2)})
        t = ET.SubElement(svg, "text", x="196", y=str(y + bar - 3), **{"font-size": "8", "text-anchor": "end"})
        t.text = f"{lab} ({v:.3g})"
    return svg


def cmd_plot(args) -> int:
    try:
        table, scalars = io.read_checkpoint(args.checkpoint)
    except (io.FormatError, OSError) as exc:
        raise InputError(f"{args.checkpoint}: {exc}") from None
    k, d = table.shape.k, table.shape.d
    try:
        factors = [int(f) for f in args.factors.split(",")] if args.factors else list(range(k))
    except ValueError:
        raise InputError(f"--factors must be comma-separated integers, got {args.factors!r}") from None
    if any(not 0 <= f < k for f in factors):
        raise InputError(f"factor indices must lie in [0, {k})")
    out, t0 = _start(args, "plot")
    dump = io.checkpoint_dump(table, scalars)
    labels = list(dump.points)
    S = np.stack([dump.points[t] for t in labels])
    alphas = scalars.alphas
    written = []
    for f in factors:
        if d == 2:
            svg = disk_svg(labels, S[:, f], float(alphas[f]))
        else:
            norms = lorentz.origin_distance(S[:, f], float(alphas[f]))
            svg = bars_svg(labels, norms)
        name = f"factor{f}.svg"
        ET.ElementTree(svg).write(out / name, encoding="utf-8", xml_declaration=True)
        written.append(name)
    _finish(out, t0, "plot", {"factors": factors}, args, [args.checkpoint], written,
            {"entities": len(labels), "kind": "disk" if d == 2 else "bars"})
    return EXIT_OK


# -- entry point ------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="flat key=value config file")
    common.add_argument("--seed", type=int, default=None)
    common.add_argument("--out", default="runs", help="parent of the run directory")
    common.add_argument("--deterministic", action="store_true",
                        help="accepted for compatibility; every command is deterministic")

    p = argparse.ArgumentParser(prog="hyperprod", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=__version__)
    sub = p.add_subparsers(dest="command", required=True)

    g = sub.add_parser("gen", parents=[common], help="generate a synthetic compositional dataset")
    g.set_defaults(func=cmd_gen)

    e = sub.add_parser("embed-tree", parents=[common], help="embed a tree file into the hyperbolic plane")
    e.add_argument("tree")
    e.add_argument("--epsilon", type=float, default=0.1)
    e.add_argument("--tau", type=float, default=None, help="starting scale (default: estimate)")
    e.set_defaults(func=cmd_embed_tree)

    t = sub.add_parser("train", parents=[common], help="train product embeddings on a dataset")
    t.add_argument("dataset")
    t.add_argument("--families", help="families.json (default: next to the dataset)")
    t.set_defaults(func=cmd_train)

    d = sub.add_parser("diagnose", help="numerical checks of the constructive results")
    dsub = d.add_subparsers(dest="check", required=True)
    ob = dsub.add_parser("obstruction", parents=[common])
    ob.add_argument("--dim", type=int, default=2)
    ob.add_argument("--alpha", type=float, default=1.0)
    ob.add_argument("--starts", type=int, default=20)
    ob.add_argument("--bound", type=float, default=0.05)
    dg = dsub.add_parser("delta-growth", parents=[common])
    dg.add_argument("--sizes", default="4,8,16")
    bi = dsub.add_parser("boolean-isometry", parents=[common])
    bi.add_argument("--n", type=int, default=4)
    gc = dsub.add_parser("gradcheck", parents=[common])
    gc.add_argument("--repeats", type=int, default=6)
    gc.add_argument("--metric", choices=("l1", "l2"), default="l1")
    gc.add_argument("--tol", type=float, default=1e-4)
    for sp in (ob, dg, bi, gc):
        sp.set_defaults(func=cmd_diagnose)

    pl = sub.add_parser("plot", parents=[common], help="SVG plots of a checkpoint")
    pl.add_argument("checkpoint")
    pl.add_argument("--factors", help="comma-separated factor indices (default: all)")
    pl.set_defaults(func=cmd_plot)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    args.seed_given = args.seed is not None
    if args.seed is None:
        args.seed = 0
    try:
        return args.func(args)
    except InputError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except io.ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except ContractError as exc:
        print(f"contract violation: {exc}", file=sys.stderr)
        return EXIT_CONTRACT


if __name__ == "__main__":
    sys.exit(main())
