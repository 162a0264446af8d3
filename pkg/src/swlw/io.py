"""Snapshots, CSV tables and manifests.

Binary snapshots are a magic line, one JSON header line, then the raw
little-endian arrays in FIELD_ORDER (coord first); CSV snapshots carry the
same header as a leading '#' comment.  Floats in every CSV are written with
17 significant digits, so values round-trip exactly.
"""

from __future__ import annotations

import csv
import hashlib
import io as _io
import json
import math
import os
from pathlib import Path

import numpy as np

from .errors import IOFailure, ValidationError
from .invariants import MONITOR_COLUMNS
from .snapshot import FIELD_ORDER, FieldSnapshot
from .sweep import SWEEP_COLUMNS

__all__ = ["MAGIC", "fmt", "write_snapshot", "read_snapshot", "write_monitors", "read_csv",
           "write_sweep", "write_table", "write_manifest", "content_hash", "OUTPUT_ROOT_ENV"]

MAGIC = b"SWLW-SNAPSHOT 1\n"
OUTPUT_ROOT_ENV = "SWLW_OUTPUT_ROOT"


def fmt(v) -> str:
    """Fixed serialisation: ints as ints, floats with 17 significant digits."""
    if isinstance(v, (bool, np.bool_)):
        return str(int(v))
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return "%.17g" % float(v)
    return str(v)


def _layout(snap: FieldSnapshot):
    out = [("coord", np.asarray(snap.coord, "<f8"))]
    for name in FIELD_ORDER:
        a = np.asarray(getattr(snap, name))
        out.append((name, a.astype("<c16" if np.iscomplexobj(a) else "<f8")))
    return out


def _header(snap: FieldSnapshot, layout) -> dict:
    return {
        "frame": snap.frame,
        "t": float(snap.t),
        "fields": [[name, list(a.shape), a.dtype.str] for name, a in layout],
        "meta": snap.meta,
    }


def _open(path, mode):
    try:
        return open(path, mode)
    except OSError as exc:
        raise IOFailure(f"cannot open {path}: {exc.strerror or exc}") from exc


def write_snapshot(path, snap: FieldSnapshot, fmt_: str = "binary") -> Path:
    path = Path(path)
    layout = _layout(snap)
    head = _header(snap, layout)
    if fmt_ == "binary":
        with _open(path, "wb") as fh:
            fh.write(MAGIC)
            fh.write(json.dumps(head, sort_keys=True).encode() + b"\n")
            for _, a in layout:
                fh.write(np.ascontiguousarray(a).tobytes())
        return path
    if fmt_ != "csv":
        raise ValidationError(f"snapshot format must be 'binary' or 'csv': got {fmt_!r}")
    cols, names = [], []
    for name, a in layout:
        flat = a.reshape(-1, a.shape[-1]) if a.ndim > 1 else a[None, :]
        for k, row in enumerate(flat):
            suffix = str(k) if a.ndim > 1 else ""
            if np.iscomplexobj(row):
                names += [f"{name}{suffix}_re", f"{name}{suffix}_im"]
                cols += [row.real, row.imag]
            else:
                names.append(name + suffix)
                cols.append(row)
    with _open(path, "w") as fh:
        fh.write("# " + json.dumps(head, sort_keys=True) + "\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(names)
        for i in range(len(cols[0])):
            w.writerow([fmt(c[i]) for c in cols])
    return path


def read_snapshot(path) -> FieldSnapshot:
    path = Path(path)
    with _open(path, "rb") as fh:
        first = fh.readline()
        if first == MAGIC:
            head = json.loads(fh.readline())
            arrays = {}
            for name, shape, dt in head["fields"]:
                dtype = np.dtype(dt)
                count = int(np.prod(shape))
                buf = fh.read(count * dtype.itemsize)
                if len(buf) != count * dtype.itemsize:
                    raise IOFailure(f"truncated snapshot {path}")
                arrays[name] = np.frombuffer(buf, dtype=dtype).reshape(shape).copy()
        elif first.startswith(b"# "):
            head = json.loads(first[2:])
            text = fh.read().decode()
            rows = list(csv.reader(_io.StringIO(text)))
            names, data = rows[0], np.array(rows[1:], dtype=float).T
            col = dict(zip(names, data))
            arrays = {}
            for name, shape, dt in head["fields"]:
                cplx = np.dtype(dt).kind == "c"
                keys = [name + (str(k) if len(shape) > 1 else "") for k in range(shape[0] if len(shape) > 1 else 1)]
                parts = [col[k + "_re"] + 1j * col[k + "_im"] if cplx else col[k] for k in keys]
                arrays[name] = np.array(parts).reshape(shape)
        else:
            raise IOFailure(f"{path} is not a snapshot file")
    return FieldSnapshot(head["frame"], head["t"], arrays["coord"],
                         *(arrays[k] for k in FIELD_ORDER), meta=head["meta"])


def write_table(path, columns, rows) -> Path:
    """CSV with a fixed column order; rows are dicts or objects with those attributes."""
    path = Path(path)
    with _open(path, "w") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(columns)
        for r in rows:
            get = r.get if isinstance(r, dict) else (lambda k, r=r: getattr(r, k))
            w.writerow([fmt(get(c)) for c in columns])
    return path


def write_monitors(path, records) -> Path:
    return write_table(path, MONITOR_COLUMNS, records)


def write_sweep(path, rows) -> Path:
    return write_table(path, SWEEP_COLUMNS, rows)


def read_csv(path) -> list[dict]:
    """Rows as dicts of strings (callers convert)."""
    with _open(path, "r") as fh:
        return list(csv.DictReader(fh))


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, (np.floating, float)):
        f = float(obj)
        return f if math.isfinite(f) else str(f)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if callable(obj):
        return getattr(obj, "__name__", repr(obj))
    return obj


def content_hash(obj) -> str:
    """git-style blob hash (sha1 of 'blob <len>\\0' + canonical JSON)."""
    body = json.dumps(_jsonable(obj), sort_keys=True, separators=(",", ":")).encode()
    return hashlib.sha1(b"blob %d\0" % len(body) + body).hexdigest()


def write_manifest(path, manifest: dict) -> Path:
    path = Path(path)
    with _open(path, "w") as fh:
        json.dump(_jsonable(manifest), fh, indent=2, sort_keys=True)
        fh.write("\n")
    return path


def output_dir(configured: str | os.PathLike, base: str | os.PathLike | None = None) -> Path:
    """Resolve the output directory: relative paths are taken under the
    SWLW_OUTPUT_ROOT environment variable when set, else under ``base``."""
    p = Path(configured)
    root = os.environ.get(OUTPUT_ROOT_ENV)
    if root:
        p = Path(root) / (p.name if p.is_absolute() else p)
    elif not p.is_absolute() and base is not None:
        p = Path(base) / p
    try:
        p.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise IOFailure(f"cannot create output directory {p}: {exc.strerror or exc}") from exc
    return p
