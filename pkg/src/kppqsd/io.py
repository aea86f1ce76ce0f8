"""CSV tables with a JSON metadata header, JSON documents, model files."""
from __future__ import annotations

import csv
import hashlib
import json
from pathlib import Path

import numpy as np

from .levy import LevyTriplet, model_from_dict

META_PREFIX = "# meta: "


def _plain(obj):
    if isinstance(obj, dict):
        return {str(k): _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _plain(obj.tolist())
    if isinstance(obj, np.generic):
        return obj.item()
    if isinstance(obj, float) and not np.isfinite(obj):
        return repr(obj)
    return obj


def dumps(obj) -> str:
    return json.dumps(_plain(obj), indent=2, sort_keys=True)


def config_hash(config: dict) -> str:
    """Short SHA-256 of the canonical JSON of ``config``."""
    text = json.dumps(_plain(config), sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(text.encode()).hexdigest()[:16]


def write_table(path, columns: dict, meta: dict | None = None) -> Path:
    """Write equal-length ``columns`` as CSV, preceded by one metadata line."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    names = list(columns)
    cols = [np.asarray(columns[k]).ravel() for k in names]
    n = {c.size for c in cols}
    if len(n) > 1:
        raise ValueError("columns differ in length")
    with path.open("w", newline="") as fh:
        fh.write(META_PREFIX + json.dumps(_plain(meta or {}), sort_keys=True) + "\n")
        out = csv.writer(fh)
        out.writerow(names)
        for row in zip(*cols):
            out.writerow([_cell(v) for v in row])
    return path


def _cell(v):
    if isinstance(v, (float, np.floating)):
        return format(float(v), ".17g")
    if isinstance(v, np.generic):
        return v.item()
    return v


def read_table(path) -> tuple[dict, dict]:
    """Inverse of :func:`write_table`: ``(columns, meta)``; numeric columns as floats."""
    path = Path(path)
    with path.open(newline="") as fh:
        first = fh.readline()
        meta = json.loads(first[len(META_PREFIX):]) if first.startswith(META_PREFIX) else {}
        if not first.startswith(META_PREFIX):
            fh.seek(0)
        rows = list(csv.reader(fh))
    names, body = rows[0], rows[1:]
    columns = {}
    for j, name in enumerate(names):
        vals = [r[j] for r in body]
        try:
            columns[name] = np.array([float(v) for v in vals])
        except ValueError:
            columns[name] = np.array(vals, dtype=object)
    return columns, meta


def write_json(path, obj) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(dumps(obj) + "\n")
    return path


def read_json(path) -> dict:
    return json.loads(Path(path).read_text())


def load_model(path) -> LevyTriplet:
    return model_from_dict(read_json(path))
