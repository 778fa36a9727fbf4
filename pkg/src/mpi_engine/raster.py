"""Dense float32 image buffers, bilinear sampling, and homography warping.

A raster is a C-contiguous numpy array of shape (height, width, channels),
dtype float32 - i.e. row-major, channel-interleaved. Sampling arithmetic
runs in float64 and results are stored back as float32.
"""

from __future__ import annotations

import concurrent.futures
import enum
import os

import numpy as np

from .errors import GeometryError, ValidationError

__all__ = [
    "BorderPolicy",
    "make_raster",
    "validate_raster",
    "bilinear_sample",
    "warp",
    "resolve_threads",
]


class BorderPolicy(enum.Enum):
    """Out-of-bounds behaviour: read zeros, or clamp to the edge texel."""

    TRANSPARENT = "transparent"
    CLAMP = "clamp"


# Slack on the valid sample domain [0, w-1] x [0, h-1]: homography chains
# built from K @ ... @ K^-1 leave coordinates a few ulp outside it, which
# must not knock whole border rows transparent.
BORDER_EPS = 1e-9


def make_raster(width: int, height: int, channels: int, fill: float = 0.0) -> np.ndarray:
    if width < 1 or height < 1 or channels < 1:
        raise ValidationError(f"invalid raster dims {width}x{height}x{channels}")
    return np.full((height, width, channels), fill, dtype=np.float32)


def validate_raster(img: np.ndarray, name: str = "raster") -> np.ndarray:
    arr = np.asarray(img)
    if arr.ndim != 3 or min(arr.shape) < 1:
        raise ValidationError(f"{name} must be (H, W, C) with positive dims, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ValidationError(f"{name} contains NaN or Inf")
    return arr


def resolve_threads(threads: int) -> int:
    """0 means auto (cpu count); negative is invalid."""
    if threads < 0:
        raise ValidationError(f"thread count must be >= 0, got {threads}")
    return threads if threads > 0 else (os.cpu_count() or 1)


def bilinear_sample(img: np.ndarray, x: float, y: float, border: BorderPolicy) -> np.ndarray:
    """Sample one point; texel (i, j) has its center at coordinate (i, j).

    Returns a float64 channel vector. Total function: out-of-bounds points
    read zeros under TRANSPARENT and edge values under CLAMP.
    """
    arr = validate_raster(img)
    h, w, c = arr.shape
    if border is BorderPolicy.TRANSPARENT and not (
        -BORDER_EPS <= x <= w - 1 + BORDER_EPS and -BORDER_EPS <= y <= h - 1 + BORDER_EPS
    ):
        return np.zeros(c, dtype=np.float64)
    x = min(max(x, 0.0), float(w - 1))
    y = min(max(y, 0.0), float(h - 1))
    x0 = int(np.floor(x))
    y0 = int(np.floor(y))
    fx = x - x0
    fy = y - y0
    x0 = min(max(x0, 0), w - 1)
    y0 = min(max(y0, 0), h - 1)
    x1 = min(x0 + 1, w - 1)
    y1 = min(y0 + 1, h - 1)
    v00 = arr[y0, x0].astype(np.float64)
    v01 = arr[y0, x1].astype(np.float64)
    v10 = arr[y1, x0].astype(np.float64)
    v11 = arr[y1, x1].astype(np.float64)
    top = v00 * (1.0 - fx) + v01 * fx
    bot = v10 * (1.0 - fx) + v11 * fx
    return top * (1.0 - fy) + bot * fy


def _normalized_homography(h: np.ndarray) -> np.ndarray:
    mat = np.asarray(h, dtype=np.float64)
    if mat.shape != (3, 3):
        raise ValidationError(f"homography must be 3x3, got {mat.shape}")
    if not np.all(np.isfinite(mat)):
        raise ValidationError("homography contains non-finite values")
    norm = np.linalg.norm(mat)
    if norm == 0.0:
        raise GeometryError("homography is the zero matrix")
    mat = mat / norm
    if abs(np.linalg.det(mat)) <= 1e-12:
        raise GeometryError("homography is singular after normalization")
    return mat


def _warp_rows(src64: np.ndarray, h: np.ndarray, out: np.ndarray,
               v0: int, v1: int, border: BorderPolicy) -> None:
    """Fill output rows [v0, v1). Elementwise float64 math only, so any row
    partition produces bit-identical results to the sequential loop."""
    src_h, src_w, _ = src64.shape
    out_w = out.shape[1]
    u = np.arange(out_w, dtype=np.float64)[None, :]
    v = np.arange(v0, v1, dtype=np.float64)[:, None]
    sx = h[0, 0] * u + h[0, 1] * v + h[0, 2]
    sy = h[1, 0] * u + h[1, 1] * v + h[1, 2]
    sw = h[2, 0] * u + h[2, 1] * v + h[2, 2]
    degenerate = np.abs(sw) < 1e-12
    sw = np.where(degenerate, 1.0, sw)
    x = sx / sw
    y = sy / sw

    if border is BorderPolicy.CLAMP:
        inb = ~degenerate
    else:
        inb = (
            (~degenerate)
            & (x >= -BORDER_EPS)
            & (x <= src_w - 1.0 + BORDER_EPS)
            & (y >= -BORDER_EPS)
            & (y <= src_h - 1.0 + BORDER_EPS)
        )
    x = np.clip(x, 0.0, src_w - 1.0)
    y = np.clip(y, 0.0, src_h - 1.0)

    x0 = np.floor(x).astype(np.intp)
    y0 = np.floor(y).astype(np.intp)
    fx = (x - x0)[..., None]
    fy = (y - y0)[..., None]
    x1 = np.minimum(x0 + 1, src_w - 1)
    y1 = np.minimum(y0 + 1, src_h - 1)

    v00 = src64[y0, x0]
    v01 = src64[y0, x1]
    v10 = src64[y1, x0]
    v11 = src64[y1, x1]
    top = v00 * (1.0 - fx) + v01 * fx
    bot = v10 * (1.0 - fx) + v11 * fx
    vals = top * (1.0 - fy) + bot * fy
    vals[~inb] = 0.0
    out[v0:v1] = vals.astype(np.float32)


def warp(img: np.ndarray, h: np.ndarray, out_w: int, out_h: int,
         border: BorderPolicy = BorderPolicy.TRANSPARENT, threads: int = 1) -> np.ndarray:
    """Inverse-warp a raster: each output pixel samples img at h @ [u, v, 1].

    h maps output pixel coordinates to input pixel coordinates (for novel-view
    rendering that is the target->reference homography). Pixels whose
    homogeneous w falls below 1e-12 read as out-of-bounds rather than failing.
    Output is (out_h, out_w, C) float32; results are identical for any thread
    count.
    """
    src = validate_raster(img)
    if out_w < 1 or out_h < 1:
        raise ValidationError(f"invalid output dims {out_w}x{out_h}")
    mat = _normalized_homography(h)
    src64 = np.ascontiguousarray(src, dtype=np.float64)
    out = np.empty((out_h, out_w, src.shape[2]), dtype=np.float32)

    n = resolve_threads(threads)
    if n <= 1 or out_h == 1:
        _warp_rows(src64, mat, out, 0, out_h, border)
        return out

    n = min(n, out_h)
    bounds = np.linspace(0, out_h, n + 1).astype(int)
    with concurrent.futures.ThreadPoolExecutor(max_workers=n) as pool:
        futures = [
            pool.submit(_warp_rows, src64, mat, out, int(v0), int(v1), border)
            for v0, v1 in zip(bounds[:-1], bounds[1:])
            if v1 > v0
        ]
        for fut in futures:
            fut.result()
    return out
