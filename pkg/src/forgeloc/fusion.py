"""Modality fusion: per-cell positive weights and the weighted-average map.

The weight producer pools, per proposal cell, the mean of both modalities'
features over the cell's window, appends the modality's own map value, and
pushes the result through a linear map + softplus.  The fused map is the
element-wise weighted average (W_v * M_v + W_a * M_a) / (W_v + W_a).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .boundary import BoundaryMap, valid_cell_mask
from .ops import sigmoid, softplus, window_mean_pool, window_mean_pool_backward
from .types import FeatureSequence

WEIGHT_EPS = 1e-12


@dataclass(frozen=True)
class WeightProducerParams:
    """Linear weights of the two producer heads; u_* has length 2*C_f + 1."""

    u_v: np.ndarray
    b_v: float
    u_a: np.ndarray
    b_a: float


@dataclass(frozen=True)
class FusionWeights:
    """Per-cell positive weights for both modalities; zero on invalid cells."""

    w_v: np.ndarray  # (D, T)
    w_a: np.ndarray  # (D, T)

    def __post_init__(self):
        w_v = np.asarray(self.w_v, dtype=np.float64)
        w_a = np.asarray(self.w_a, dtype=np.float64)
        if w_v.shape != w_a.shape or w_v.ndim != 2:
            raise ValueError(f"weight grids must share a 2D shape: {w_v.shape} vs {w_a.shape}")
        mask = valid_cell_mask(*w_v.shape)
        for name, w in (("w_v", w_v), ("w_a", w_a)):
            if np.any(w[~mask] != 0.0):
                raise ValueError(f"{name} must be zero on invalid cells")
            if np.any(w[mask] <= 0.0):
                raise ValueError(f"{name} must be strictly positive on valid cells")
        w_v = w_v.copy()
        w_a = w_a.copy()
        w_v.flags.writeable = False
        w_a.flags.writeable = False
        object.__setattr__(self, "w_v", w_v)
        object.__setattr__(self, "w_a", w_a)


def producer_cell_features(m_own, f_own, f_other, max_duration):
    """Batched per-cell producer inputs: (N, 2C+1, D, T).

    First 2C channels are window means of [own features ; other features];
    the last channel is the modality's own map value at the cell.
    """
    stacked = np.concatenate([f_own, f_other], axis=1)
    pooled, t = window_mean_pool(stacked, max_duration)
    cells = np.concatenate([pooled, m_own[:, None, :, :]], axis=1)
    return cells, t


def produce_weights_arrays(m_own, f_own, f_other, u, bias, mask):
    """Forward pass of one producer head over a batch; returns (w, cache)."""
    cells, t = producer_cell_features(m_own, f_own, f_other, m_own.shape[1])
    logit = np.einsum("c,ncdt->ndt", u, cells, optimize=True) + bias
    w = softplus(logit) * mask
    return w, (cells, logit, t)


def produce_weights_arrays_backward(g, cache, u, mask):
    """Gradients of one producer head.

    Returns (d_f_own, d_f_other, d_m_own, d_u, d_bias).
    """
    cells, logit, t = cache
    c_f = (cells.shape[1] - 1) // 2
    dlogit = g * mask * sigmoid(logit)
    du = np.einsum("ndt,ncdt->c", dlogit, cells, optimize=True)
    db = float(dlogit.sum())
    dcells = u[None, :, None, None] * dlogit[:, None, :, :]
    d_m_own = dcells[:, -1, :, :]
    d_stacked = window_mean_pool_backward(dcells[:, :-1, :, :], t)
    return d_stacked[:, :c_f], d_stacked[:, c_f:], d_m_own, du, db


def produce_weights(
    m_v: BoundaryMap,
    m_a: BoundaryMap,
    f_v: FeatureSequence,
    f_a: FeatureSequence,
    params: WeightProducerParams,
) -> FusionWeights:
    """Per-cell fusion weights for a single video pair."""
    if m_v.values.shape != m_a.values.shape:
        raise ValueError("modality maps must share shape")
    mask = m_v.valid_mask.astype(np.float64)
    w_v, _ = produce_weights_arrays(
        m_v.values[None], f_v.data[None], f_a.data[None], params.u_v, params.b_v, mask[None]
    )
    w_a, _ = produce_weights_arrays(
        m_a.values[None], f_a.data[None], f_v.data[None], params.u_a, params.b_a, mask[None]
    )
    return FusionWeights(w_v[0], w_a[0])


def fuse_arrays(m_v, m_a, w_v, w_a, mask):
    """Element-wise weighted average over a batch of map grids.

    Valid cells where both weights fall below WEIGHT_EPS fall back to the
    unweighted mean.  Returns (fused, partials) where partials holds the
    per-cell derivatives of the fused value w.r.t. each input.
    """
    m_v = np.asarray(m_v, dtype=np.float64)
    m_a = np.asarray(m_a, dtype=np.float64)
    w_v = np.asarray(w_v, dtype=np.float64)
    w_a = np.asarray(w_a, dtype=np.float64)
    if not (m_v.shape == m_a.shape == w_v.shape == w_a.shape):
        raise ValueError("fuse inputs must share shape")

    total = w_v + w_a
    degenerate = mask & (w_v < WEIGHT_EPS) & (w_a < WEIGHT_EPS)
    active = mask & ~degenerate
    safe_total = np.where(active, total, 1.0)

    fused = np.zeros_like(m_v)
    fused = np.where(active, (w_v * m_v + w_a * m_a) / safe_total, fused)
    fused = np.where(degenerate, 0.5 * (m_v + m_a), fused)

    d_mv = np.where(active, w_v / safe_total, 0.0) + 0.5 * degenerate
    d_ma = np.where(active, w_a / safe_total, 0.0) + 0.5 * degenerate
    d_wv = np.where(active, w_a * (m_v - m_a) / (safe_total * safe_total), 0.0)
    d_wa = np.where(active, w_v * (m_a - m_v) / (safe_total * safe_total), 0.0)
    partials = {"m_v": d_mv, "m_a": d_ma, "w_v": d_wv, "w_a": d_wa}
    return fused, partials


def fuse(m_v: BoundaryMap, m_a: BoundaryMap, weights: FusionWeights) -> BoundaryMap:
    """Fuse two modality maps into one; invalid cells stay 0."""
    if m_v.values.shape != m_a.values.shape:
        raise ValueError("modality maps must share shape")
    if weights.w_v.shape != m_v.values.shape:
        raise ValueError("weights must match map shape")
    fused, _ = fuse_arrays(
        m_v.values[None], m_a.values[None], weights.w_v[None], weights.w_a[None],
        m_v.valid_mask[None],
    )
    # Weighted averaging can overshoot [0, 1] by float rounding only.
    return BoundaryMap(np.clip(fused[0], 0.0, 1.0))
