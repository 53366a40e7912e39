"""JSON and CSV persistence for result records."""

import csv
import json
import math
from pathlib import Path

import numpy as np

SCHEMA_VERSION = "cechkit.result/1"


def load_json(p, default):
    p = Path(p)
    if p.exists():
        return json.loads(p.read_text())
    return default


def save_json(p, data):
    p = Path(p)
    p.parent.mkdir(parents=True, exist_ok=True)
    p.write_text(dumps(data) + "\n")


def dumps(data):
    return json.dumps(data, indent=2, sort_keys=True, allow_nan=False)


def to_plain(value):
    """Plain JSON types: numpy scalars and arrays unwrapped, non-finite floats as strings."""
    if isinstance(value, dict):
        return {str(k): to_plain(v) for k, v in value.items()}
    if isinstance(value, (list, tuple, set, frozenset)):
        items = sorted(value) if isinstance(value, (set, frozenset)) else value
        return [to_plain(v) for v in items]
    if isinstance(value, np.ndarray):
        return to_plain(value.tolist())
    if isinstance(value, np.generic):
        return to_plain(value.item())
    if isinstance(value, float) and not math.isfinite(value):
        return str(value)
    return value


def write_csv(p, rows):
    p = Path(p)
    p.parent.mkdir(parents=True, exist_ok=True)
    fields = []
    for row in rows:
        for key in row:
            if key not in fields:
                fields.append(key)
    with p.open("w", newline="") as f:
        writer = csv.DictWriter(f, fieldnames=fields, lineterminator="\n")
        writer.writeheader()
        for row in rows:
            writer.writerow(row)


def envelope(operation, params, seed, body):
    """The versioned top-level shape shared by every result file."""
    return {
        "schema": SCHEMA_VERSION,
        "operation": operation,
        "params": params,
        "seed": seed,
        "result": body,
    }


def floats(values):
    return [float(v) for v in values]
