"""Training losses with analytic gradients.

Four objectives over batched inputs, plus their weighted total:

* contrastive feature loss between video and audio features,
* per-frame binary cross-entropy for both modality classifiers,
* mean-squared error on the fused boundary map,
* mean-squared error on the per-modality boundary maps.

Every loss returns a :class:`LossReport` carrying the scalar value and the
gradient with respect to each prediction tensor.  Batches are stacked numpy
arrays with the sample axis first.  All functions are pure and re-entrant.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .types import MODALITIES, VideoAnnotation, modality_labels

BCE_EPS = 1e-7


@dataclass(frozen=True)
class LossWeights:
    """Weights for the four loss terms and the contrastive margin."""

    lambda_c: float = 0.1
    lambda_f: float = 2.0
    lambda_b: float = 1.0
    lambda_bm: float = 1.0
    delta: float = 0.99

    def __post_init__(self):
        for name in ("lambda_c", "lambda_f", "lambda_b", "lambda_bm"):
            v = getattr(self, name)
            if not np.isfinite(v) or v < 0:
                raise ValueError(f"{name} must be finite and nonnegative, got {v}")
        if not np.isfinite(self.delta) or self.delta <= 0:
            raise ValueError(f"delta must be positive, got {self.delta}")


@dataclass
class LossReport:
    """Scalar loss value plus gradients keyed by input-tensor name."""

    value: float
    gradients: dict[str, np.ndarray]


def _as_batch(x, ndim: int, name: str) -> np.ndarray:
    arr = np.asarray(x, dtype=np.float64)
    if arr.ndim != ndim:
        raise ValueError(f"{name} must have {ndim} dims (batch first), got shape {arr.shape}")
    return arr


def contrastive_loss(f_v, f_a, y, delta: float) -> LossReport:
    """Contrastive loss on per-sample feature distances.

    d_i is the Frobenius norm of (f_v[i] - f_a[i]).  Real pairs (y=1) are
    pulled together via d^2; pairs with at least one modified modality (y=0)
    are pushed past the margin via max(delta - d, 0)^2.  Normalized by
    N * C_f * T.  Subgradient 0 at d = 0 and d = delta.
    """
    f_v = _as_batch(f_v, 3, "f_v")
    f_a = _as_batch(f_a, 3, "f_a")
    if f_v.shape != f_a.shape:
        raise ValueError(f"feature shapes differ: {f_v.shape} vs {f_a.shape}")
    y = np.asarray(y, dtype=np.float64).reshape(-1)
    if y.shape[0] != f_v.shape[0]:
        raise ValueError("y length must match batch size")
    if not np.all((y == 0.0) | (y == 1.0)):
        raise ValueError("pair labels must be 0 or 1")

    n, c, t = f_v.shape
    norm = float(n * c * t)
    diff = f_v - f_a
    d = np.sqrt(np.sum(diff * diff, axis=(1, 2)))
    hinge = np.maximum(delta - d, 0.0)
    value = float(np.sum(y * d * d + (1.0 - y) * hinge * hinge) / norm)

    # Per-sample scale on diff: 2y for the pull term, -2*hinge/d for the
    # push term (0 exactly at d = 0 and at the hinge boundary d = delta).
    safe_d = np.where(d > 0.0, d, 1.0)
    push = np.where((y == 0.0) & (d > 0.0) & (d < delta), -2.0 * hinge / safe_d, 0.0)
    coef = (2.0 * y + push) / norm
    g_v = coef[:, None, None] * diff
    return LossReport(value, {"f_v": g_v, "f_a": -g_v})


def frame_label_targets(anns: list[VideoAnnotation]) -> tuple[np.ndarray, np.ndarray]:
    """Stacked (N, T) per-modality frame targets for a batch of annotations."""
    t_v, t_a = (
        np.stack([modality_labels(a, m).labels for a in anns]) for m in MODALITIES
    )
    return t_v, t_a


def frame_classification_loss_from_targets(y_v, y_a, t_v, t_a) -> LossReport:
    """BCE over both modalities given precomputed (N, T) target arrays."""
    y_v = _as_batch(y_v, 2, "y_v")
    y_a = _as_batch(y_a, 2, "y_a")
    if y_v.shape != y_a.shape:
        raise ValueError(f"prediction shapes differ: {y_v.shape} vs {y_a.shape}")
    if t_v.shape != y_v.shape or t_a.shape != y_a.shape:
        raise ValueError(f"targets imply {t_v.shape}, predictions are {y_v.shape}")

    n, t = y_v.shape
    norm = float(2 * n * t)
    value = 0.0
    grads = {}
    for name, pred, target in (("y_v", y_v, t_v), ("y_a", y_a, t_a)):
        p = np.clip(pred, BCE_EPS, 1.0 - BCE_EPS)
        value -= float(np.sum(target * np.log(p) + (1.0 - target) * np.log1p(-p)))
        grad = -(target / p - (1.0 - target) / (1.0 - p)) / norm
        grad *= (pred > BCE_EPS) & (pred < 1.0 - BCE_EPS)
        grads[name] = grad
    return LossReport(value / norm, grads)


def frame_classification_loss(y_v, y_a, anns: list[VideoAnnotation]) -> LossReport:
    """Mean binary cross-entropy of both frame classifiers.

    Targets come from :func:`modality_labels`: the fake-frame labels when the
    modality was modified, all zeros otherwise.  Predictions are clamped to
    [BCE_EPS, 1 - BCE_EPS]; the clamp blocks gradient where it is active.
    """
    y_v = _as_batch(y_v, 2, "y_v")
    if len(anns) != y_v.shape[0]:
        raise ValueError("annotation count must match batch size")
    t_v, t_a = frame_label_targets(anns)
    return frame_classification_loss_from_targets(y_v, y_a, t_v, t_a)


def boundary_loss(m_hat, m) -> LossReport:
    """Mean squared error between predicted and ground-truth boundary maps,
    averaged over all N * D * T cells (invalid cells are zero on both sides)."""
    m_hat = _as_batch(m_hat, 3, "m_hat")
    m = _as_batch(m, 3, "m")
    if m_hat.shape != m.shape:
        raise ValueError(f"map shapes differ: {m_hat.shape} vs {m.shape}")
    diff = m_hat - m
    norm = float(m.size)
    return LossReport(float(np.sum(diff * diff) / norm), {"m_hat": 2.0 * diff / norm})


def modality_boundary_loss(m_v, m_a, anns: list[VideoAnnotation], m_gt) -> LossReport:
    """MSE of the per-modality maps against eta-masked targets.

    The target for modality m is eta_m * M: the full ground-truth map when
    that modality was modified, the all-zero map otherwise.  Averaged over
    both modalities (2 * N * D * T cells).
    """
    m_v = _as_batch(m_v, 3, "m_v")
    m_a = _as_batch(m_a, 3, "m_a")
    m_gt = _as_batch(m_gt, 3, "m_gt")
    if not (m_v.shape == m_a.shape == m_gt.shape):
        raise ValueError(f"map shapes differ: {m_v.shape}, {m_a.shape}, {m_gt.shape}")
    if len(anns) != m_gt.shape[0]:
        raise ValueError("annotation count must match batch size")

    eta_v = np.array([a.eta_v for a in anns], dtype=np.float64)[:, None, None]
    eta_a = np.array([a.eta_a for a in anns], dtype=np.float64)[:, None, None]
    diff_v = m_v - eta_v * m_gt
    diff_a = m_a - eta_a * m_gt
    norm = float(2 * m_gt.size)
    value = float((np.sum(diff_v * diff_v) + np.sum(diff_a * diff_a)) / norm)
    return LossReport(value, {"m_v": 2.0 * diff_v / norm, "m_a": 2.0 * diff_a / norm})


def total_loss(
    contrastive: LossReport,
    frame: LossReport,
    boundary: LossReport,
    modality: LossReport,
    weights: LossWeights,
) -> LossReport:
    """Weighted sum of the four component losses; gradients combine linearly."""
    parts = (
        (weights.lambda_c, contrastive),
        (weights.lambda_f, frame),
        (weights.lambda_b, boundary),
        (weights.lambda_bm, modality),
    )
    value = 0.0
    grads: dict[str, np.ndarray] = {}
    for lam, report in parts:
        value += lam * report.value
        for key, g in report.gradients.items():
            if key in grads:
                grads[key] = grads[key] + lam * g
            else:
                grads[key] = lam * g
    return LossReport(value, grads)
