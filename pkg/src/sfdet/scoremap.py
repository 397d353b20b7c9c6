"""RPN score maps and the high-pass filter bank.

A score map is a float array of shape ``(H, W, C)`` with one channel per
anchor at each location; 2-D ``(H, W)`` arrays are accepted and treated as a
single channel.
"""
from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np
from scipy.special import expit

KINDS = ("unsharp", "gaussian", "laplacian", "log", "identity")
SUPPORTED = {
    ("unsharp", 3), ("unsharp", 5),
    ("gaussian", 3), ("gaussian", 5),
    ("laplacian", 3), ("laplacian", 5),
    ("log", 3),
}


@dataclass(frozen=True, eq=False)
class Kernel:
    weights: np.ndarray
    kind: str = "custom"

    def __post_init__(self):
        w = np.array(self.weights, dtype=float)
        if w.ndim != 2 or w.shape[0] != w.shape[1] or w.shape[0] % 2 == 0:
            raise ValueError(f"kernel must be square with odd side, got shape {w.shape}")
        if not np.all(np.isfinite(w)):
            raise ValueError("kernel weights must be finite")
        w.setflags(write=False)
        object.__setattr__(self, "weights", w)
        if self.kind in ("unsharp", "gaussian") and abs(w.sum() - 1.0) > 1e-12:
            raise ValueError(f"{self.kind} kernel must have unit DC gain")

    @property
    def size(self) -> int:
        return self.weights.shape[0]

    def __repr__(self):
        return f"Kernel(kind={self.kind!r}, size={self.size})"


def _box(size: int) -> np.ndarray:
    return np.full((size, size), 1.0 / (size * size))


def _delta(size: int) -> np.ndarray:
    d = np.zeros((size, size))
    d[size // 2, size // 2] = 1.0
    return d


def _compose(first: np.ndarray, second: np.ndarray) -> np.ndarray:
    """Single kernel equal to correlating with ``first`` then ``second``."""
    n, m = first.shape[0], second.shape[0]
    out = np.zeros((n + m - 1, n + m - 1))
    for u in range(m):
        for v in range(m):
            out[u:u + n, v:v + n] += second[u, v] * first
    return out


def make_kernel(kind: str, size: int) -> Kernel:
    """Build one of the supported filters.

    ``unsharp`` is ``2 * identity - box``: a uniform negative surround with
    unit DC gain. ``log`` composes the 3x3 Gaussian with the 3x3 Laplacian,
    so its weights span 5x5.
    """
    if kind == "identity":
        if size < 1 or size % 2 == 0:
            raise ValueError("identity kernel size must be odd and positive")
        return Kernel(_delta(size), "identity")
    if (kind, size) not in SUPPORTED:
        raise ValueError(f"unsupported kernel: {kind} {size}x{size}")
    if kind == "unsharp":
        w = 2.0 * _delta(size) - _box(size)
    elif kind == "gaussian":
        row = np.array([1.0, 2.0, 1.0]) if size == 3 else np.array([1.0, 4.0, 6.0, 4.0, 1.0])
        w = np.outer(row, row) / row.sum() ** 2
    elif kind == "laplacian":
        if size == 3:
            w = np.array([[0.0, 1.0, 0.0], [1.0, -4.0, 1.0], [0.0, 1.0, 0.0]])
        else:
            w = np.ones((5, 5))
            w[2, 2] = -24.0
    else:
        w = _compose(make_kernel("gaussian", 3).weights, make_kernel("laplacian", 3).weights)
    return Kernel(w, kind)


def _as_hwc(m) -> tuple[np.ndarray, bool]:
    a = np.asarray(m, dtype=float)
    if a.ndim == 2:
        return a[:, :, None], True
    if a.ndim != 3:
        raise ValueError(f"score map must be 2-D or 3-D, got shape {a.shape}")
    return a, False


def sigmoid_map(m) -> np.ndarray:
    return expit(np.asarray(m, dtype=float))


def _correlate_channel(x: np.ndarray, w: np.ndarray) -> np.ndarray:
    r = w.shape[0] // 2
    padded = np.pad(x, r, mode="edge")
    h, wd = x.shape
    out = np.zeros_like(x)
    for u in range(w.shape[0]):
        for v in range(w.shape[1]):
            out += w[u, v] * padded[u:u + h, v:v + wd]
    return out


def convolve2d(m, k: Kernel, n_jobs: int = 1) -> np.ndarray:
    """Per-channel 2-D cross-correlation with replicate padding.

    Output has the input's shape. Channels are independent, so ``n_jobs``
    only changes scheduling, never the result.
    """
    a, squeeze = _as_hwc(m)
    h, w, c = a.shape
    if k.size > h or k.size > w:
        raise ValueError(f"kernel {k.size}x{k.size} larger than map {h}x{w}")
    chans = [np.ascontiguousarray(a[:, :, ch]) for ch in range(c)]
    if n_jobs == 1 or c == 1:
        res = [_correlate_channel(x, k.weights) for x in chans]
    else:
        with ThreadPoolExecutor(max_workers=n_jobs) as pool:
            res = list(pool.map(lambda x: _correlate_channel(x, k.weights), chans))
    out = np.stack(res, axis=-1)
    return out[:, :, 0] if squeeze else out


def apply_hpf(m, k: Kernel, n_jobs: int = 1) -> np.ndarray:
    """Filter an activated score map and clamp back to [0, 1]."""
    return np.clip(convolve2d(m, k, n_jobs=n_jobs), 0.0, 1.0)


def filter_macs(h: int, w: int, c: int, kernel_side: int) -> int:
    """Multiply count of one filter pass."""
    return kernel_side * kernel_side * h * w * c
