"""Binary and text formats for kernels, fields and reports.

Binary layouts are little-endian throughout:

* kernel (``LFPK``): magic, u32 version, u32 d, f64 eps, u64 n, then n (r, K) f64 pairs;
* field (``LFPF``): magic, u32 version, u32 d, u32 n, f64 spacing, f64 eps,
  u8 sampler id, u64 seed, then n^d f64 values in row-major order.
"""

from __future__ import annotations

import csv
import json
import math
import os
import struct
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np

KERNEL_MAGIC = b"LFPK"
FIELD_MAGIC = b"LFPF"
FORMAT_VERSION = 1

_KERNEL_HEADER = struct.Struct("<4sIIdQ")
_FIELD_HEADER = struct.Struct("<4sIIIddBQ")


class FormatError(ValueError):
    """Malformed or unsupported artifact file."""


def _atomic_write(path: Path, data: bytes) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_name(path.name + f".{os.getpid()}.tmp")
    with open(tmp, "wb") as fh:
        fh.write(data)
    os.replace(tmp, path)


def kernel_bytes(d: int, epsilon: float, radii: np.ndarray, values: np.ndarray) -> bytes:
    radii = np.asarray(radii, dtype="<f8")
    values = np.asarray(values, dtype="<f8")
    if radii.shape != values.shape or radii.ndim != 1:
        raise FormatError("radius and value arrays must be 1-D of equal length")
    pairs = np.column_stack([radii, values]).astype("<f8")
    return _KERNEL_HEADER.pack(KERNEL_MAGIC, FORMAT_VERSION, d, float(epsilon), radii.size) + pairs.tobytes()


def write_kernel(path, kernel) -> None:
    _atomic_write(path, kernel_bytes(kernel.dimension_d, kernel.epsilon, kernel.radius_grid, kernel.values))


def read_kernel(path) -> dict:
    """Return ``{"d", "epsilon", "r", "K"}`` from an LFPK file."""
    raw = Path(path).read_bytes()
    if len(raw) < _KERNEL_HEADER.size:
        raise FormatError(f"{path}: truncated header")
    magic, version, d, eps, n = _KERNEL_HEADER.unpack_from(raw)
    if magic != KERNEL_MAGIC:
        raise FormatError(f"{path}: bad magic {magic!r}")
    if version != FORMAT_VERSION:
        raise FormatError(f"{path}: unsupported version {version}")
    body = np.frombuffer(raw, dtype="<f8", offset=_KERNEL_HEADER.size)
    if body.size != 2 * n:
        raise FormatError(f"{path}: expected {n} pairs, found {body.size / 2}")
    pairs = body.reshape(n, 2)
    return {"d": d, "epsilon": eps, "r": pairs[:, 0].copy(), "K": pairs[:, 1].copy()}


def field_bytes(d: int, n: int, spacing: float, epsilon: float, sampler_id: int, seed: int,
                values: np.ndarray) -> bytes:
    values = np.ascontiguousarray(values, dtype="<f8")
    if values.shape != (n,) * d:
        raise FormatError(f"field shape {values.shape} does not match d={d}, n={n}")
    head = _FIELD_HEADER.pack(FIELD_MAGIC, FORMAT_VERSION, d, n, float(spacing), float(epsilon),
                              int(sampler_id), int(seed))
    return head + values.tobytes()


def write_field(path, sample) -> None:
    g = sample.grid
    _atomic_write(path, field_bytes(g.dimension_d, g.n_per_axis, g.spacing, sample.epsilon,
                                    sample.sampler_id, sample.seed, sample.values))


def read_field(path) -> dict:
    """Return header fields and ``values`` from an LFPF file."""
    raw = Path(path).read_bytes()
    if len(raw) < _FIELD_HEADER.size:
        raise FormatError(f"{path}: truncated header")
    magic, version, d, n, spacing, eps, sampler_id, seed = _FIELD_HEADER.unpack_from(raw)
    if magic != FIELD_MAGIC:
        raise FormatError(f"{path}: bad magic {magic!r}")
    if version != FORMAT_VERSION:
        raise FormatError(f"{path}: unsupported version {version}")
    body = np.frombuffer(raw, dtype="<f8", offset=_FIELD_HEADER.size)
    if body.size != n**d:
        raise FormatError(f"{path}: expected {n**d} values, found {body.size}")
    return {"d": d, "n": n, "spacing": spacing, "epsilon": eps, "sampler_id": sampler_id,
            "seed": seed, "values": body.reshape((n,) * d).copy()}


def _fmt(value) -> str:
    if isinstance(value, float):
        return repr(value)
    return str(value)


def write_csv(path, header: Sequence[str], rows: Iterable[Sequence]) -> None:
    """CSV with ``repr`` floats so values round-trip exactly."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_name(path.name + f".{os.getpid()}.tmp")
    with open(tmp, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([_fmt(v) for v in row])
    os.replace(tmp, path)


def read_csv(path) -> tuple[list[str], list[list[str]]]:
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    return rows[0], rows[1:]


def _jsonable(obj):
    if isinstance(obj, Mapping):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [_jsonable(v) for v in obj.tolist()]
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        if math.isinf(v):
            return "inf" if v > 0 else "-inf"
        if math.isnan(v):
            return "nan"
        return v
    return obj


def dumps_json(obj) -> str:
    """Deterministic JSON: sorted keys, infinities as strings."""
    return json.dumps(_jsonable(obj), sort_keys=True, indent=2) + "\n"


def write_json(path, obj) -> None:
    _atomic_write(path, dumps_json(obj).encode())
