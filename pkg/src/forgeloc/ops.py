"""Differentiable numpy primitives shared by the model and fusion modules.

Each forward returns (output, cache); the matching backward consumes the
upstream gradient plus the cache and returns input/parameter gradients.
Everything is float64 and deterministic.
"""

from __future__ import annotations

import math

import numpy as np

PAD_MIN = np.finfo(np.float64).min


def sigmoid(x: np.ndarray) -> np.ndarray:
    z = np.exp(-np.abs(x))  # in (0, 1], no overflow
    return np.where(x >= 0, 1.0, z) / (1.0 + z)


def softplus(x: np.ndarray) -> np.ndarray:
    return np.logaddexp(0.0, x)


def conv1d_same(x: np.ndarray, w: np.ndarray, b: np.ndarray):
    """Temporal convolution with zero same-padding.

    x: (N, C_in, T), w: (C_out, C_in, K) with K odd, b: (C_out,).
    """
    n, c_in, t = x.shape
    c_out, c_in2, k = w.shape
    if c_in2 != c_in:
        raise ValueError(f"kernel expects {c_in2} input channels, got {c_in}")
    if k % 2 != 1:
        raise ValueError("kernel width must be odd")
    pad = (k - 1) // 2
    xp = np.zeros((n, c_in, t + 2 * pad), dtype=np.float64)
    xp[:, :, pad : pad + t] = x
    out = np.broadcast_to(b[None, :, None], (n, c_out, t)).copy()
    tmp = np.empty_like(out)
    for j in range(k):
        np.matmul(w[:, :, j], xp[:, :, j : j + t], out=tmp)
        out += tmp
    return out, (xp, w.shape)


def conv1d_same_backward(g: np.ndarray, x_padded: np.ndarray, w: np.ndarray):
    """Gradients of conv1d_same: returns (dx, dw, db)."""
    n, c_out, t = g.shape
    k = w.shape[2]
    pad = (k - 1) // 2
    dw = np.empty_like(w)
    dxp = np.zeros_like(x_padded)
    tmp = np.empty_like(g[:, : w.shape[1], :])
    for j in range(k):
        dw[:, :, j] = np.tensordot(g, x_padded[:, :, j : j + t], axes=([0, 2], [0, 2]))
        np.matmul(np.ascontiguousarray(w[:, :, j].T), g, out=tmp)
        dxp[:, :, j : j + t] += tmp
    db = g.sum(axis=(0, 2))
    return dxp[:, :, pad : pad + t], dw, db


def maxpool_time(x: np.ndarray, t_out: int):
    """Max-pool the time axis of (N, C, L) down to t_out frames.

    When L is not a multiple of t_out the tail is right-padded with the
    minimum finite value so padding never wins the max.
    """
    n, c, length = x.shape
    if length < t_out:
        raise ValueError(f"cannot pool {length} frames down to {t_out}")
    ratio = math.ceil(length / t_out)
    padded_len = ratio * t_out
    if padded_len != length:
        xp = np.full((n, c, padded_len), PAD_MIN, dtype=np.float64)
        xp[:, :, :length] = x
    else:
        xp = x
    windows = xp.reshape(n, c, t_out, ratio)
    idx = np.argmax(windows, axis=3)
    out = np.take_along_axis(windows, idx[:, :, :, None], axis=3)[:, :, :, 0]
    return out, (idx, length, ratio)


def maxpool_time_backward(g: np.ndarray, cache) -> np.ndarray:
    idx, length, ratio = cache
    n, c, t_out = g.shape
    dxp = np.zeros((n, c, t_out, ratio), dtype=np.float64)
    np.put_along_axis(dxp, idx[:, :, :, None], g[:, :, :, None], axis=3)
    return dxp.reshape(n, c, t_out * ratio)[:, :, :length]


def window_mean_pool(x: np.ndarray, max_duration: int):
    """Mean of x over every proposal window.

    x: (N, C, T) -> pooled (N, C, D, T) where pooled[.., d, t] is the mean of
    columns [t, t+d+1).  Cells whose window exceeds T are left at 0.
    """
    n, c, t = x.shape
    cs = np.zeros((n, c, t + 1), dtype=np.float64)
    np.cumsum(x, axis=2, out=cs[:, :, 1:])
    out = np.zeros((n, c, max_duration, t), dtype=np.float64)
    for d in range(min(max_duration, t)):
        w = d + 1
        out[:, :, d, : t - d] = (cs[:, :, w:] - cs[:, :, : t + 1 - w]) / w
    return out, t


def window_mean_pool_backward(g: np.ndarray, t: int) -> np.ndarray:
    """Scatter window-mean gradients back onto the frame axis."""
    n, c, max_duration, _ = g.shape
    dx = np.zeros((n, c, t), dtype=np.float64)
    for d in range(min(max_duration, t)):
        w = d + 1
        u = g[:, :, d, : t - d] / w
        for o in range(w):
            dx[:, :, o : o + t - d] += u
    return dx


def relative_error(analytic: np.ndarray, numeric: np.ndarray) -> float:
    """Norm-based relative discrepancy between two gradient arrays."""
    analytic = np.asarray(analytic, dtype=np.float64)
    numeric = np.asarray(numeric, dtype=np.float64)
    scale = max(np.linalg.norm(analytic.ravel()), np.linalg.norm(numeric.ravel()))
    if scale < 1e-12:
        return 0.0
    return float(np.linalg.norm((analytic - numeric).ravel()) / scale)


def central_difference(fn, x: np.ndarray, step: float = 1e-5) -> np.ndarray:
    """Central finite-difference gradient of a scalar function of one array."""
    x = np.array(x, dtype=np.float64)
    grad = np.zeros_like(x)
    flat = x.reshape(-1)
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + step
        f_plus = fn(x)
        flat[i] = orig - step
        f_minus = fn(x)
        flat[i] = orig
        grad.reshape(-1)[i] = (f_plus - f_minus) / (2.0 * step)
    return grad
