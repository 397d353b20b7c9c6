"""On-disk formats: SFT1 tensors, CSV maps, and deterministic report output.

SFT1 layout: ``b"SFT1"``, one dtype byte (1 = float32 little-endian), one
rank byte, ``rank`` little-endian uint32 dims, then the row-major payload.
"""
from __future__ import annotations

import csv
import io
import json
import struct
from pathlib import Path

import numpy as np

MAGIC = b"SFT1"
DTYPES = {1: np.dtype("<f4")}
DTYPE_CODES = {v: k for k, v in DTYPES.items()}


class TensorFormatError(ValueError):
    pass


def encode_tensor(arr) -> bytes:
    a = np.ascontiguousarray(np.asarray(arr, dtype="<f4"))
    if a.ndim > 255:
        raise TensorFormatError("rank too large")
    head = MAGIC + struct.pack("<BB", 1, a.ndim) + struct.pack(f"<{a.ndim}I", *a.shape)
    return head + a.tobytes(order="C")


def decode_tensor(data: bytes) -> np.ndarray:
    if len(data) < 6 or data[:4] != MAGIC:
        raise TensorFormatError("not an SFT1 tensor (bad magic)")
    code, rank = struct.unpack_from("<BB", data, 4)
    if code not in DTYPES:
        raise TensorFormatError(f"unsupported dtype code {code}")
    off = 6 + 4 * rank
    if len(data) < off:
        raise TensorFormatError("truncated header")
    dims = struct.unpack_from(f"<{rank}I", data, 6)
    dtype = DTYPES[code]
    count = int(np.prod(dims, dtype=np.int64)) if rank else 1
    if len(data) - off != count * dtype.itemsize:
        raise TensorFormatError(
            f"payload is {len(data) - off} bytes, expected {count * dtype.itemsize}")
    return np.frombuffer(data, dtype=dtype, count=count, offset=off).reshape(dims).copy()


def write_tensor(path, arr) -> None:
    Path(path).write_bytes(encode_tensor(arr))


def read_tensor(path) -> np.ndarray:
    """Read an SFT1 file, or a rank-2 map from a ``.csv`` file."""
    p = Path(path)
    if p.suffix.lower() == ".csv":
        a = np.loadtxt(p, delimiter=",", dtype=float, ndmin=2)
        return a
    return decode_tensor(p.read_bytes())


def fmt6(x: float) -> str:
    return f"{x:.6f}"


def round6(obj):
    """Recursively round floats to 6 decimals for reproducible reports."""
    if isinstance(obj, float):
        r = round(obj, 6)
        return 0.0 if r == 0 else r
    if isinstance(obj, dict):
        return {k: round6(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [round6(v) for v in obj]
    if isinstance(obj, np.generic):
        return round6(obj.item())
    return obj


def dumps_json(obj) -> str:
    return json.dumps(round6(obj), indent=2, sort_keys=True) + "\n"


def dumps_csv(header, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([fmt6(v) if isinstance(v, float) else v for v in row])
    return buf.getvalue()


def dumps_table(header, rows) -> str:
    cells = [[str(h) for h in header]]
    for row in rows:
        cells.append([fmt6(v) if isinstance(v, float) else str(v) for v in row])
    widths = [max(len(r[i]) for r in cells) for i in range(len(header))]
    lines = []
    for n, r in enumerate(cells):
        lines.append("  ".join(c.rjust(widths[i]) for i, c in enumerate(r)).rstrip())
        if n == 0:
            lines.append("  ".join("-" * wd for wd in widths))
    return "\n".join(lines) + "\n"
