"""Text formats: embedding dumps, checkpoints, flat configs and run manifests.

Embedding dump::

    #embedding k=<k> d=<d>
    #alpha <alpha_1> ... <alpha_k>
    #tau <tau_1> ... <tau_k>        (optional)
    <id>,<factor_index>,<coord_0>,...,<coord_{d-1}>
    ...

A checkpoint is a dump of every token's lifted point followed by::

    #scalars
    <name>=<value>
    ...
"""

from __future__ import annotations

import dataclasses
import datetime as _dt
import json
import math
import platform
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from . import lorentz
from .learning import EmbeddingTable, TrainScalars, token_modality
from .product import ProductShape


class FormatError(ValueError):
    def __init__(self, message: str, lineno: int | None = None):
        self.lineno = lineno
        super().__init__((f"line {lineno}: " if lineno else "") + message)


class ConfigError(ValueError):
    def __init__(self, message: str, key: str | None = None):
        self.key = key
        super().__init__(message)


# -- ids ------------------------------------------------------------------------

def format_id(key) -> str:
    """Id text for a dump line; tuple ids (product embeddings) are ``|``-joined.

    Ids are read back as plain strings.
    """
    s = "|".join(str(p) for p in key) if isinstance(key, tuple) else str(key)
    if not s or "," in s or "\n" in s:
        raise FormatError(f"id {s!r} is empty or contains a comma/newline")
    return s


# -- embedding dumps ----------------------------------------------------------

@dataclass
class EmbeddingDump:
    points: dict  # id -> (k, d) space coordinates
    alphas: np.ndarray
    taus: np.ndarray | None = None
    scalars: dict | None = None

    @property
    def k(self) -> int:
        return len(self.alphas)

    @property
    def d(self) -> int:
        return next(iter(self.points.values())).shape[1] if self.points else 0


def _floats(vals) -> str:
    return " ".join(repr(float(v)) for v in vals)


def format_dump(dump: EmbeddingDump) -> str:
    if not dump.points:
        raise FormatError("nothing to dump")
    k, d = dump.k, dump.d
    lines = [f"#embedding k={k} d={d}", "#alpha " + _floats(dump.alphas)]
    if dump.taus is not None:
        lines.append("#tau " + _floats(dump.taus))
    for key, arr in dump.points.items():
        arr = np.asarray(arr, dtype=float)
        if arr.shape != (k, d):
            raise FormatError(f"point {key!r} has shape {arr.shape}, expected {(k, d)}")
        sid = format_id(key)
        for i in range(k):
            lines.append(",".join([sid, str(i)] + [repr(float(x)) for x in arr[i]]))
    if dump.scalars is not None:
        lines.append("#scalars")
        for name, v in dump.scalars.items():
            if isinstance(v, (list, tuple, np.ndarray)):
                v = " ".join(repr(float(x)) for x in v)
            elif isinstance(v, float):
                v = repr(v)
            lines.append(f"{name}={v}")
    return "\n".join(lines) + "\n"


def parse_dump(text: str) -> EmbeddingDump:
    lines = text.splitlines()
    if not lines or not lines[0].startswith("#embedding"):
        raise FormatError("missing '#embedding' header", 1)
    try:
        head = dict(p.split("=", 1) for p in lines[0].split()[1:])
        k, d = int(head["k"]), int(head["d"])
    except (ValueError, KeyError):
        raise FormatError("header must read '#embedding k=<int> d=<int>'", 1) from None
    alphas = taus = scalars = None
    rows: dict = {}
    section = "points"
    for lineno, raw in enumerate(lines[1:], start=2):
        line = raw.strip()
        if not line:
            continue
        if line == "#scalars":
            section, scalars = "scalars", {}
            continue
        if section == "scalars":
            if "=" not in line:
                raise FormatError("scalar lines must be name=value", lineno)
            name, v = line.split("=", 1)
            scalars[name.strip()] = v.strip()
            continue
        if line.startswith("#alpha") or line.startswith("#tau"):
            tag, *vals = line.split()
            try:
                arr = np.array([float(v) for v in vals])
            except ValueError:
                raise FormatError(f"non-numeric {tag[1:]} value", lineno) from None
            if arr.shape != (k,):
                raise FormatError(f"{tag[1:]} needs {k} values, got {arr.size}", lineno)
            if tag == "#alpha":
                alphas = arr
            else:
                taus = arr
            continue
        if line.startswith("#"):
            continue
        parts = line.split(",")
        if len(parts) != d + 2:
            raise FormatError(f"expected {d + 2} fields, got {len(parts)}", lineno)
        try:
            i = int(parts[1])
            coords = np.array([float(v) for v in parts[2:]])
        except ValueError:
            raise FormatError("bad factor index or coordinate", lineno) from None
        if not 0 <= i < k:
            raise FormatError(f"factor index {i} outside [0, {k})", lineno)
        key = parts[0]
        arr = rows.setdefault(key, np.full((k, d), np.nan))
        arr[i] = coords
    if alphas is None:
        raise FormatError("missing '#alpha' line")
    for key, arr in rows.items():
        if np.isnan(arr).any():
            raise FormatError(f"point {key!r} is missing factors")
    return EmbeddingDump(rows, alphas, taus, scalars)


def write_dump(dump: EmbeddingDump, path) -> None:
    Path(path).write_text(format_dump(dump))


def read_dump(path) -> EmbeddingDump:
    return parse_dump(Path(path).read_text())


# -- checkpoints ----------------------------------------------------------------

def _role_of(token) -> str:
    return token_modality(token)


def checkpoint_dump(table: EmbeddingTable, scalars: TrainScalars) -> EmbeddingDump:
    k, d = table.shape.k, table.shape.d
    alphas = scalars.alphas
    pts = {}
    for i, tok in enumerate(table.tokens):
        v = scalars.scale(_role_of(tok)) * table.weights[i].reshape(k, d)
        pts[tok] = lorentz.expmap0(v, alphas)
    sd = scalars.to_dict()
    keep = ("log_tau", "log_c_img", "log_c_txt", "log_alpha", "gamma", "eta_inter", "eta_intra", "K")
    return EmbeddingDump(pts, alphas, None, {n: sd[n] for n in keep})


def write_checkpoint(table: EmbeddingTable, scalars: TrainScalars, path) -> None:
    write_dump(checkpoint_dump(table, scalars), path)


def read_checkpoint(path) -> tuple[EmbeddingTable, TrainScalars]:
    dump = read_dump(path)
    if dump.scalars is None:
        raise FormatError("checkpoint has no '#scalars' block")
    s = dump.scalars
    try:
        scalars = TrainScalars(
            np.array([float(v) for v in s["log_alpha"].split()]), float(s["log_tau"]),
            float(s["log_c_img"]), float(s["log_c_txt"]), float(s["gamma"]),
            float(s["eta_inter"]), float(s["eta_intra"]), float(s["K"]))
    except (KeyError, ValueError) as exc:
        raise FormatError(f"bad scalars block ({exc})") from None
    shape = ProductShape(dump.k, dump.d)
    tokens = list(dump.points)
    alphas = scalars.alphas
    W = np.stack([lorentz.logmap0(dump.points[t], alphas).reshape(-1) / scalars.scale(_role_of(t))
                  for t in tokens])
    return EmbeddingTable(tokens, shape, W), scalars


# -- flat key=value configs ---------------------------------------------------

def _to_bool(s: str) -> bool:
    low = s.strip().lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {s!r}")


def parse_config(text: str, schema: Mapping[str, type]) -> dict:
    """Parse ``key=value`` lines (``#`` comments) against ``{key: type}``."""
    out = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected key=value, got {line!r}")
        key, val = (p.strip() for p in line.split("=", 1))
        if key not in schema:
            raise ConfigError(f"unknown config key {key!r}", key)
        typ = schema[key]
        try:
            out[key] = _to_bool(val) if typ is bool else typ(val)
        except ValueError:
            raise ConfigError(f"config key {key!r}: cannot read {val!r} as {typ.__name__}", key) from None
        if isinstance(out[key], float) and not math.isfinite(out[key]):
            raise ConfigError(f"config key {key!r} must be finite", key)
    return out


def read_config(path, schema: Mapping[str, type]) -> dict:
    return parse_config(Path(path).read_text(), schema)


def schema_of(cls) -> dict:
    return {f.name: (f.type if isinstance(f.type, type) else eval(f.type))  # noqa: S307 - dataclass annotations
            for f in dataclasses.fields(cls)}


# -- run directories and manifests --------------------------------------------

def run_dir(out: str | Path, seed: int, now: _dt.datetime | None = None) -> Path:
    now = now or _dt.datetime.now()
    base = Path(out) / f"{now.strftime('%Y%m%d-%H%M%S')}-seed{seed}"
    path, n = base, 1
    while path.exists():
        path = base.with_name(f"{base.name}-{n}")
        n += 1
    path.mkdir(parents=True)
    return path


@dataclass
class RunManifest:
    command: str
    config: dict
    seed: int
    version: str
    inputs: list = field(default_factory=list)
    outputs: list = field(default_factory=list)
    wall_time: float = 0.0
    summary: dict = field(default_factory=dict)
    python: str = field(default_factory=platform.python_version)

    def write(self, directory) -> Path:
        path = Path(directory) / "manifest.json"
        path.write_text(json.dumps(dataclasses.asdict(self), indent=1, sort_keys=True, default=str) + "\n")
        return path

    @classmethod
    def read(cls, path) -> RunManifest:
        return cls(**json.loads(Path(path).read_text()))


def write_trace(trace: Sequence[float], path, parts: Sequence | None = None) -> None:
    with open(path, "w") as fh:
        fh.write("step,loss" + (",contrastive,entailment" if parts else "") + "\n")
        for i, v in enumerate(trace):
            extra = f",{parts[i][0]!r},{parts[i][1]!r}" if parts else ""
            fh.write(f"{i},{v!r}{extra}\n")
