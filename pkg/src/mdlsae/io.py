"""Checkpoint and report file formats.

Checkpoint layout (all little-endian)::

    8s   magic  b"MDLSAECK"
    u32  format version (1)
    u32  input_dim d
    u32  dict_size D
    u8   activation rule (0 relu_l1, 1 topk, 2 batch_topk), 3 pad bytes
    u32  k
    u64  seed
    f32  encoder weights  D x d, row-major
    f32  encoder bias     D
    f32  decoder weights  d x D, row-major
    f32  decoder bias     d

Reports are UTF-8 CSV with a header row, or JSON lines. Floats are written
with ``repr`` so they parse back exactly; missing values are empty cells.
"""
from __future__ import annotations

import csv
import io
import json
import struct
from pathlib import Path

import numpy as np

from .sae import ACTIVATION_RULES, SparseAutoencoder

MAGIC = b"MDLSAECK"
VERSION = 1
_HEADER = struct.Struct("<8sIIIB3xIQ")


class CheckpointError(ValueError):
    pass


def checkpoint_bytes(model: SparseAutoencoder) -> bytes:
    d, D = model.n_features_in_, model.dict_size
    header = _HEADER.pack(MAGIC, VERSION, d, D,
                          ACTIVATION_RULES.index(model.activation_rule),
                          int(model.k), int(model.seed) & 0xFFFFFFFFFFFFFFFF)
    parts = [model.W_enc_, model.b_enc_, model.W_dec_, model.b_dec_]
    payload = b"".join(np.ascontiguousarray(p, dtype="<f4").tobytes() for p in parts)
    return header + payload


def parse_checkpoint(buf: bytes) -> SparseAutoencoder:
    if len(buf) < _HEADER.size:
        raise CheckpointError(f"checkpoint too short ({len(buf)} bytes)")
    magic, version, d, D, rule, k, seed = _HEADER.unpack_from(buf, 0)
    if magic != MAGIC:
        raise CheckpointError(f"bad checkpoint magic {magic!r}")
    if version != VERSION:
        raise CheckpointError(f"unsupported checkpoint version {version}")
    if rule >= len(ACTIVATION_RULES):
        raise CheckpointError(f"unknown activation rule code {rule}")
    if d < 1 or D < 1:
        raise CheckpointError(f"bad dimensions d={d}, D={D}")
    n_floats = 2 * d * D + d + D
    if len(buf) != _HEADER.size + 4 * n_floats:
        raise CheckpointError(f"checkpoint payload is {len(buf) - _HEADER.size} bytes, "
                              f"expected {4 * n_floats}")
    flat = np.frombuffer(buf, dtype="<f4", offset=_HEADER.size).astype(np.float64)
    if not np.all(np.isfinite(flat)):
        raise CheckpointError("checkpoint contains non-finite parameters")
    i = 0

    def take(n, shape):
        nonlocal i
        out = flat[i:i + n].reshape(shape)
        i += n
        return out

    W_enc = take(D * d, (D, d))
    b_enc = take(D, (D,))
    W_dec = take(d * D, (d, D))
    b_dec = take(d, (d,))
    rule_name = ACTIVATION_RULES[rule]
    if rule_name != "relu_l1" and not 1 <= k <= D:
        raise CheckpointError(f"k={k} outside 1..{D}")
    return SparseAutoencoder.from_weights(W_enc, b_enc, W_dec, b_dec,
                                          activation_rule=rule_name, k=max(k, 1),
                                          seed=seed)


def save_checkpoint(model: SparseAutoencoder, path) -> None:
    Path(path).write_bytes(checkpoint_bytes(model))


def load_checkpoint(path) -> SparseAutoencoder:
    return parse_checkpoint(Path(path).read_bytes())


def _cell(v) -> str:
    if v is None:
        return ""
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return repr(v)
    return str(v)


def json_clean(v):
    """Plain-Python, strictly valid JSON value (NaN and inf become null)."""
    if isinstance(v, dict):
        return {k: json_clean(x) for k, x in v.items()}
    if isinstance(v, (list, tuple)):
        return [json_clean(x) for x in v]
    if isinstance(v, np.integer):
        return int(v)
    if isinstance(v, (float, np.floating)):
        v = float(v)
        return v if np.isfinite(v) else None
    return v


def csv_text(rows, columns=None) -> str:
    rows = list(rows)
    if columns is None:
        columns = list(rows[0]) if rows else []
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(columns)
    for r in rows:
        w.writerow([_cell(r.get(c)) for c in columns])
    return buf.getvalue()


def jsonl_text(rows) -> str:
    return "".join(json.dumps(json_clean(r), allow_nan=False) + "\n" for r in rows)


def write_rows(path, rows, fmt="csv", columns=None) -> None:
    text = csv_text(rows, columns) if fmt == "csv" else jsonl_text(rows)
    Path(path).write_text(text, encoding="utf-8")


def read_csv(path) -> list:
    with open(path, encoding="utf-8", newline="") as f:
        return list(csv.DictReader(f))


def read_jsonl(path) -> list:
    with open(path, encoding="utf-8") as f:
        return [json.loads(line) for line in f if line.strip()]
