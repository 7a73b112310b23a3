"""Deterministic CSV/JSON output with embedded config hash and version."""

import csv
import hashlib
import json
import math
from pathlib import Path

import numpy as np

from . import __version__

SCHEMA_VERSION = 1


class CorruptFile(ValueError):
    pass


def canonical(obj):
    return json.dumps(_plain(obj), sort_keys=True, separators=(",", ":"))


def config_hash(cfg):
    return hashlib.sha256(canonical(cfg).encode()).hexdigest()[:16]


def _plain(obj):
    if isinstance(obj, dict):
        return {str(k): _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [_plain(v) for v in obj.tolist()]
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        x = float(obj)
        return x if math.isfinite(x) else None
    if isinstance(obj, complex):
        return [obj.real, obj.imag]
    return obj


def write_json(path, payload, cfg_hash):
    doc = dict(schema_version=SCHEMA_VERSION, artifact_version=__version__, config_hash=cfg_hash)
    doc.update(_plain(payload))
    Path(path).write_text(json.dumps(doc, sort_keys=True, indent=1) + "\n")
    return path


def read_json(path):
    try:
        doc = json.loads(Path(path).read_text())
    except FileNotFoundError:
        raise
    except (json.JSONDecodeError, UnicodeDecodeError) as exc:
        raise CorruptFile(f"{path}: {exc}")
    if not isinstance(doc, dict) or "schema_version" not in doc:
        raise CorruptFile(f"{path}: missing schema_version")
    return doc


def _fmt(x):
    if isinstance(x, str):
        return x
    return repr(float(x))


def write_csv(path, columns, data, cfg_hash):
    """columns: names; data: dict name -> sequence (all the same length)."""
    n = {len(data[c]) for c in columns}
    if len(n) > 1:
        raise ValueError("columns of unequal length")
    with open(path, "w", newline="") as fh:
        fh.write(f"# config_hash={cfg_hash} artifact_version={__version__}\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(columns)
        for row in zip(*(data[c] for c in columns)):
            w.writerow([_fmt(x) for x in row])
    return path


def read_csv(path, numeric=None):
    """(meta, columns) from a file written by write_csv.

    numeric: column names that must parse as finite floats (default: all).
    """
    meta = {}
    with open(path, newline="") as fh:
        first = fh.readline()
        if not first.startswith("#"):
            raise CorruptFile(f"{path}: missing metadata line")
        for tok in first[1:].split():
            if "=" in tok:
                k, v = tok.split("=", 1)
                meta[k] = v
        rows = list(csv.reader(fh))
    if not rows:
        raise CorruptFile(f"{path}: no header")
    header = rows[0]
    body = rows[1:]
    if any(len(r) != len(header) for r in body):
        raise CorruptFile(f"{path}: ragged rows")
    numeric = header if numeric is None else numeric
    cols = {}
    for j, name in enumerate(header):
        vals = [r[j] for r in body]
        if name in numeric:
            try:
                arr = np.array([float(v) for v in vals])
            except ValueError as exc:
                raise CorruptFile(f"{path}: column {name}: {exc}")
            if not np.all(np.isfinite(arr)):
                raise CorruptFile(f"{path}: column {name} has non-finite entries")
            cols[name] = arr
        else:
            cols[name] = vals
    return meta, cols
