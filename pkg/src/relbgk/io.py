"""Binary snapshots of :class:`DistributionField`.

Layout (all integers and floats little-endian):

    bytes 0..7     magic ``RBGKDF01``
    bytes 8..11    uint32 ``H``, length of the header in bytes
    next H bytes   UTF-8 JSON header: ``half_width``, ``n_nodes``, ``center``
                   (3-lists), ``x_cells``, ``nodes``, ``dtype`` ("float64"),
                   ``order`` ("C"), ``meta`` (free-form dict)
    remainder      ``x_cells * nodes`` float64 values, row-major
                   ``values[cell, node]``; nodes in ``(ix, iy, iz)`` order
"""
from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

from .errors import DomainError
from .phase_space import DistributionField, MomentumGrid

FIELD_MAGIC = b"RBGKDF01"


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, np.generic):
        return obj.item()
    return obj


def save_field(field: DistributionField, path) -> Path:
    header = dict(field.grid.metadata(), x_cells=field.x_cells, nodes=field.grid.size,
                  dtype="float64", order="C", meta=_jsonable(field.meta))
    raw = json.dumps(header, sort_keys=True).encode()
    path = Path(path)
    with path.open("wb") as fh:
        fh.write(FIELD_MAGIC)
        fh.write(struct.pack("<I", len(raw)))
        fh.write(raw)
        fh.write(np.ascontiguousarray(field.values, dtype="<f8").tobytes())
    return path


def load_field(path) -> DistributionField:
    buf = Path(path).read_bytes()
    if buf[:8] != FIELD_MAGIC:
        raise DomainError(f"{path}: not a distribution snapshot")
    (hlen,) = struct.unpack("<I", buf[8:12])
    header = json.loads(buf[12:12 + hlen].decode())
    grid = MomentumGrid(header["half_width"], header["n_nodes"], header["center"])
    shape = (header["x_cells"], header["nodes"])
    data = np.frombuffer(buf[12 + hlen:], dtype="<f8")
    if data.size != shape[0] * shape[1] or grid.size != shape[1]:
        raise DomainError(f"{path}: payload does not match header shape {shape}")
    return DistributionField(grid, data.reshape(shape).astype(float), header.get("meta", {}))
