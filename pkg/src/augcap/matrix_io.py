"""Binary matrix files shared by features and embeddings.

Layout: two little-endian uint32 (rows, cols) followed by rows*cols
little-endian float32 values in row-major order. Metadata lives in a JSON
sidecar at ``<path>.json``.
"""

from __future__ import annotations

import csv
import json
import struct
from pathlib import Path

import numpy as np

from augcap.errors import CorruptHeader

_HEADER = struct.Struct("<II")


def sidecar_path(path: str | Path) -> Path:
    path = Path(path)
    return path.with_name(path.name + ".json")


def write_matrix(path: str | Path, matrix: np.ndarray, meta: dict | None = None) -> None:
    matrix = np.asarray(matrix)
    if matrix.ndim != 2:
        raise ValueError(f"expected a 2-D matrix, got shape {matrix.shape}")
    rows, cols = matrix.shape
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(rows, cols))
        fh.write(np.ascontiguousarray(matrix, dtype="<f4").tobytes())
    sidecar = {"rows": rows, "cols": cols, "dtype": "float32", **(meta or {})}
    sidecar_path(path).write_text(json.dumps(sidecar, indent=2, sort_keys=True), encoding="utf-8")


def read_matrix(path: str | Path) -> tuple[np.ndarray, dict]:
    data = Path(path).read_bytes()
    if len(data) < _HEADER.size:
        raise CorruptHeader(f"{path}: file shorter than the 8-byte header")
    rows, cols = _HEADER.unpack_from(data)
    body = data[_HEADER.size:]
    if len(body) != rows * cols * 4:
        raise CorruptHeader(f"{path}: header says {rows}x{cols} but body has {len(body)} bytes")
    matrix = np.frombuffer(body, dtype="<f4").reshape(rows, cols).astype(np.float64)
    side = sidecar_path(path)
    meta = json.loads(side.read_text(encoding="utf-8")) if side.exists() else {}
    return matrix, meta


def write_csv(path: str | Path, matrix: np.ndarray) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        for row in np.asarray(matrix):
            writer.writerow([f"{v:.6g}" for v in row])
