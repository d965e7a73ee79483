"""Desk-scale differentiable model: encoders, frame classifiers, boundary
heads, fusion, and a full-batch gradient-descent training loop.

Inputs are precomputed per-frame video descriptors and mel spectrograms;
each encoder is a stack of same-padded temporal convolutions (tanh between
layers, linear last), the audio stack ending in a max-pool that aligns T_a
to T.  Frame classifiers are per-frame logistic readouts; boundary heads
score every proposal cell from the window mean of [features ; frame
prediction].  All gradients are computed analytically in numpy.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np

from . import fusion, losses, ops
from .boundary import BoundaryMap, gt_boundary_map, valid_cell_mask
from .fusion import WeightProducerParams
from .losses import LossWeights
from .types import FeatureSequence, FrameLabelSequence, VideoAnnotation


class TrainingDiverged(RuntimeError):
    """Raised when the training loss turns non-finite."""

    def __init__(self, step: int, value: float):
        super().__init__(f"non-finite loss {value} at step {step}")
        self.step = step


@dataclass(frozen=True)
class EncoderConfig:
    """Shared shape configuration for both modality encoders."""

    feature_dim: int  # C_f
    video_input_dim: int  # per-frame descriptor channels
    audio_input_dim: int  # mel bins
    temporal_kernel: int = 3
    n_layers: int = 2

    def __post_init__(self):
        for name in ("feature_dim", "video_input_dim", "audio_input_dim", "n_layers"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be positive")
        if self.temporal_kernel < 1 or self.temporal_kernel % 2 == 0:
            raise ValueError("temporal_kernel must be odd and positive")


@dataclass(frozen=True)
class ModelConfig:
    encoder: EncoderConfig
    max_duration: int  # D, proposal duration rows
    seed: int = 0

    def __post_init__(self):
        if self.max_duration < 1:
            raise ValueError("max_duration must be positive")


@dataclass
class ModelParams:
    """Named parameter arrays; scalars are stored as 0-d arrays."""

    arrays: dict[str, np.ndarray]

    def copy(self) -> "ModelParams":
        return ModelParams({k: v.copy() for k, v in self.arrays.items()})

    def producer_params(self) -> WeightProducerParams:
        a = self.arrays
        return WeightProducerParams(
            u_v=a["fus_v_w"], b_v=float(a["fus_v_b"]),
            u_a=a["fus_a_w"], b_a=float(a["fus_a_b"]),
        )


def _uniform(rng: np.random.Generator, shape, fan_in: int) -> np.ndarray:
    bound = 1.0 / math.sqrt(fan_in)
    return rng.uniform(-bound, bound, size=shape)


def init_params(config: ModelConfig) -> ModelParams:
    """Seeded uniform initialization, bound 1/sqrt(fan_in) per array."""
    enc = config.encoder
    rng = np.random.default_rng(config.seed)
    c_f, k = enc.feature_dim, enc.temporal_kernel
    arrays: dict[str, np.ndarray] = {}
    for tag, in_dim in (("enc_v", enc.video_input_dim), ("enc_a", enc.audio_input_dim)):
        dims = [in_dim] + [c_f] * enc.n_layers
        for i in range(enc.n_layers):
            fan = dims[i] * k
            arrays[f"{tag}{i}_w"] = _uniform(rng, (dims[i + 1], dims[i], k), fan)
            arrays[f"{tag}{i}_b"] = _uniform(rng, (dims[i + 1],), fan)
    for tag, width in (("cls", c_f), ("bnd", c_f + 1), ("fus", 2 * c_f + 1)):
        for m in ("v", "a"):
            arrays[f"{tag}_{m}_w"] = _uniform(rng, (width,), width)
            arrays[f"{tag}_{m}_b"] = _uniform(rng, (), width)
    return ModelParams(arrays)


# ---------------------------------------------------------------------------
# Forward / backward building blocks (batched, channels-first).
# ---------------------------------------------------------------------------


def _conv_stack(x, params: ModelParams, tag: str, n_layers: int):
    """Conv stack with tanh between layers and a linear final layer."""
    caches = []
    h = x
    for i in range(n_layers):
        w, b = params.arrays[f"{tag}{i}_w"], params.arrays[f"{tag}{i}_b"]
        z, conv_cache = ops.conv1d_same(h, w, b)
        if i < n_layers - 1:
            h = np.tanh(z)
            caches.append((conv_cache, h))
        else:
            h = z
            caches.append((conv_cache, None))
    return h, caches


def _conv_stack_backward(g, caches, params: ModelParams, tag: str, grads: dict):
    n_layers = len(caches)
    for i in reversed(range(n_layers)):
        (xp, _), act = caches[i]
        if act is not None:
            g = g * (1.0 - act * act)
        w = params.arrays[f"{tag}{i}_w"]
        g, dw, db = ops.conv1d_same_backward(g, xp, w)
        grads[f"{tag}{i}_w"] += dw
        grads[f"{tag}{i}_b"] += db
    return g


def _classifier(f, w, b):
    logit = np.einsum("c,nct->nt", w, f, optimize=True) + b
    y = ops.sigmoid(logit)
    return y, y


def _classifier_backward(g, y, f, w):
    dlogit = g * y * (1.0 - y)
    dw = np.einsum("nt,nct->c", dlogit, f, optimize=True)
    db = dlogit.sum()
    df = w[None, :, None] * dlogit[:, None, :]
    return df, dw, db


def _boundary_head(f, y_hat, w, b, mask, max_duration):
    """sigmoid(linear(window-mean of [features ; frame prediction])), masked."""
    xcat = np.concatenate([f, y_hat[:, None, :]], axis=1)
    pooled, t = ops.window_mean_pool(xcat, max_duration)
    logit = np.einsum("c,ncdt->ndt", w, pooled, optimize=True) + b
    sig = ops.sigmoid(logit)
    return sig * mask, (pooled, sig, t)


def _boundary_head_backward(g, cache, w, mask):
    pooled, sig, t = cache
    dlogit = g * mask * sig * (1.0 - sig)
    dw = np.einsum("ndt,ncdt->c", dlogit, pooled, optimize=True)
    db = dlogit.sum()
    dpooled = w[None, :, None, None] * dlogit[:, None, :, :]
    dxcat = ops.window_mean_pool_backward(dpooled, t)
    return dxcat[:, :-1], dxcat[:, -1], dw, db


def forward_batch(params: ModelParams, config: ModelConfig, video, audio):
    """Full forward pass over a batch.

    video: (N, video_input_dim, T) descriptors; audio: (N, T_a, mel_bins)
    spectrograms.  Returns a state dict with every intermediate tensor and
    cache needed by :func:`backward_batch`.

    Both boundary heads and both fusion weight producers consume window
    means of the same four tensors, so the batch path pools the stacked
    [F_v ; F_a ; y_v ; y_a] channels once and reads channel slices; the
    per-cell math is identical to the single-video operations.
    """
    enc = config.encoder
    n, _, t = video.shape
    c = enc.feature_dim
    d_max = config.max_duration
    mask = valid_cell_mask(d_max, t).astype(np.float64)[None]

    f_v, cache_ev = _conv_stack(video, params, "enc_v", enc.n_layers)
    a_pre, cache_ea = _conv_stack(np.swapaxes(audio, 1, 2), params, "enc_a", enc.n_layers)
    f_a, cache_pool = ops.maxpool_time(a_pre, t)

    a = params.arrays
    y_v, cache_cv = _classifier(f_v, a["cls_v_w"], float(a["cls_v_b"]))
    y_a, cache_ca = _classifier(f_a, a["cls_a_w"], float(a["cls_a_b"]))

    stacked = np.concatenate([f_v, f_a, y_v[:, None], y_a[:, None]], axis=1)
    pooled, _ = ops.window_mean_pool(stacked, d_max)  # (N, 2C+2, D, T)
    pool_v, pool_a = pooled[:, :c], pooled[:, c : 2 * c]

    def head(w, bias, own_pool, own_frame):
        logit = np.einsum("c,ncdt->ndt", w[:c], own_pool, optimize=True)
        logit += w[c] * own_frame + bias
        sig = ops.sigmoid(logit)
        return sig * mask, sig

    m_v, sig_bv = head(a["bnd_v_w"], float(a["bnd_v_b"]), pool_v, pooled[:, 2 * c])
    m_a, sig_ba = head(a["bnd_a_w"], float(a["bnd_a_b"]), pool_a, pooled[:, 2 * c + 1])

    def producer(u, bias, own_pool, other_pool, own_map):
        logit = np.einsum("c,ncdt->ndt", u[:c], own_pool, optimize=True)
        logit += np.einsum("c,ncdt->ndt", u[c : 2 * c], other_pool, optimize=True)
        logit += u[2 * c] * own_map + bias
        return ops.softplus(logit) * mask, logit

    w_v, logit_fv = producer(a["fus_v_w"], float(a["fus_v_b"]), pool_v, pool_a, m_v)
    w_a, logit_fa = producer(a["fus_a_w"], float(a["fus_a_b"]), pool_a, pool_v, m_a)
    fused, fuse_partials = fusion.fuse_arrays(m_v, m_a, w_v, w_a, mask > 0)

    return {
        "mask": mask, "f_v": f_v, "f_a": f_a, "y_v": y_v, "y_a": y_a,
        "m_v": m_v, "m_a": m_a, "w_v": w_v, "w_a": w_a, "fused": fused,
        "caches": {
            "enc_v": cache_ev, "enc_a": cache_ea, "pool": cache_pool,
            "cls_v": cache_cv, "cls_a": cache_ca,
            "pooled": pooled, "bnd_v": sig_bv, "bnd_a": sig_ba,
            "fus_v": logit_fv, "fus_a": logit_fa,
            "fuse": fuse_partials,
        },
    }


def backward_batch(params: ModelParams, config: ModelConfig, state, loss_grads):
    """Backpropagate loss gradients through the whole model.

    loss_grads may carry any of: f_v, f_a (features), y_v, y_a (frame
    predictions), m_v, m_a (modality maps), m_hat (fused map).  Returns a
    gradient dict aligned with params.arrays.
    """
    a = params.arrays
    caches = state["caches"]
    mask = state["mask"]
    c = config.encoder.feature_dim
    pooled = caches["pooled"]
    pool_v, pool_a = pooled[:, :c], pooled[:, c : 2 * c]
    grads = {k: np.zeros_like(v) for k, v in a.items()}

    def pull(key, like):
        g = loss_grads.get(key)
        return np.zeros_like(like) if g is None else g

    d_fused = pull("m_hat", state["fused"])
    fp = caches["fuse"]
    d_m_v = pull("m_v", state["m_v"]) + d_fused * fp["m_v"]
    d_m_a = pull("m_a", state["m_a"]) + d_fused * fp["m_a"]
    d_w_v = d_fused * fp["w_v"]
    d_w_a = d_fused * fp["w_a"]

    d_f_v = pull("f_v", state["f_v"])
    d_f_a = pull("f_a", state["f_a"])
    d_pooled = np.zeros_like(pooled)

    # Fusion weight producers: softplus'(x) = sigmoid(x).
    for tag, d_w, own_sl, other_sl, own_pool, other_pool, logit in (
        ("fus_v", d_w_v, np.s_[:c], np.s_[c : 2 * c], pool_v, pool_a, caches["fus_v"]),
        ("fus_a", d_w_a, np.s_[c : 2 * c], np.s_[:c], pool_a, pool_v, caches["fus_a"]),
    ):
        u = a[f"{tag}_w"]
        dlogit = d_w * mask * ops.sigmoid(logit)
        grads[f"{tag}_w"][:c] += np.einsum("ndt,ncdt->c", dlogit, own_pool, optimize=True)
        grads[f"{tag}_w"][c : 2 * c] += np.einsum(
            "ndt,ncdt->c", dlogit, other_pool, optimize=True
        )
        grads[f"{tag}_w"][2 * c] += (dlogit * state["m_v" if tag == "fus_v" else "m_a"]).sum()
        grads[f"{tag}_b"] += dlogit.sum()
        d_pooled[:, own_sl] += u[:c, None, None] * dlogit[:, None]
        d_pooled[:, other_sl] += u[c : 2 * c, None, None] * dlogit[:, None]
        if tag == "fus_v":
            d_m_v += u[2 * c] * dlogit
        else:
            d_m_a += u[2 * c] * dlogit

    # Boundary heads.
    for tag, d_m, own_pool, frame_ch, own_sl, sig in (
        ("bnd_v", d_m_v, pool_v, 2 * c, np.s_[:c], caches["bnd_v"]),
        ("bnd_a", d_m_a, pool_a, 2 * c + 1, np.s_[c : 2 * c], caches["bnd_a"]),
    ):
        w = a[f"{tag}_w"]
        dlogit = d_m * mask * sig * (1.0 - sig)
        grads[f"{tag}_w"][:c] += np.einsum("ndt,ncdt->c", dlogit, own_pool, optimize=True)
        grads[f"{tag}_w"][c] += (dlogit * pooled[:, frame_ch]).sum()
        grads[f"{tag}_b"] += dlogit.sum()
        d_pooled[:, own_sl] += w[:c, None, None] * dlogit[:, None]
        d_pooled[:, frame_ch] += w[c] * dlogit

    d_stacked = ops.window_mean_pool_backward(d_pooled, pooled.shape[3])
    d_f_v += d_stacked[:, :c]
    d_f_a += d_stacked[:, c : 2 * c]
    d_y_v = pull("y_v", state["y_v"]) + d_stacked[:, 2 * c]
    d_y_a = pull("y_a", state["y_a"]) + d_stacked[:, 2 * c + 1]

    df, dw, db = _classifier_backward(d_y_v, caches["cls_v"], state["f_v"], a["cls_v_w"])
    d_f_v += df
    grads["cls_v_w"] += dw
    grads["cls_v_b"] += db
    df, dw, db = _classifier_backward(d_y_a, caches["cls_a"], state["f_a"], a["cls_a_w"])
    d_f_a += df
    grads["cls_a_w"] += dw
    grads["cls_a_b"] += db

    _conv_stack_backward(d_f_v, caches["enc_v"], params, "enc_v", grads)
    d_a_pre = ops.maxpool_time_backward(d_f_a, caches["pool"])
    _conv_stack_backward(d_a_pre, caches["enc_a"], params, "enc_a", grads)
    return grads


# ---------------------------------------------------------------------------
# Single-video operations.
# ---------------------------------------------------------------------------


def encode_video(descriptors, params: ModelParams, config: ModelConfig) -> FeatureSequence:
    """Per-frame video features from a (video_input_dim, T) descriptor matrix."""
    x = descriptors.data if isinstance(descriptors, FeatureSequence) else np.asarray(descriptors)
    if x.shape[1] < config.encoder.temporal_kernel:
        raise ValueError("need at least temporal_kernel frames")
    out, _ = _conv_stack(x[None].astype(np.float64), params, "enc_v", config.encoder.n_layers)
    return FeatureSequence(out[0])


def encode_audio(
    spectrogram, params: ModelParams, config: ModelConfig, frames: int
) -> FeatureSequence:
    """Features from a (T_a, mel_bins) spectrogram, max-pooled down to `frames`."""
    spec = np.asarray(spectrogram, dtype=np.float64)
    if spec.shape[0] < frames:
        raise ValueError(f"spectrogram has {spec.shape[0]} frames, need at least {frames}")
    pre, _ = _conv_stack(spec.T[None], params, "enc_a", config.encoder.n_layers)
    pooled, _ = ops.maxpool_time(pre, frames)
    return FeatureSequence(pooled[0])


def classify_frames(
    features: FeatureSequence, params: ModelParams, modality: str = "video"
) -> FrameLabelSequence:
    tag = "cls_v" if modality == "video" else "cls_a"
    y, _ = _classifier(
        features.data[None], params.arrays[f"{tag}_w"], float(params.arrays[f"{tag}_b"])
    )
    return FrameLabelSequence(y[0])


def predict_boundary_map(
    features: FeatureSequence,
    frame_preds: FrameLabelSequence,
    params: ModelParams,
    max_duration: int,
    modality: str = "video",
) -> BoundaryMap:
    tag = "bnd_v" if modality == "video" else "bnd_a"
    mask = valid_cell_mask(max_duration, features.frames).astype(np.float64)[None]
    m, _ = _boundary_head(
        features.data[None], frame_preds.labels[None],
        params.arrays[f"{tag}_w"], float(params.arrays[f"{tag}_b"]),
        mask, max_duration,
    )
    return BoundaryMap(m[0])


def predict_video(params: ModelParams, config: ModelConfig, descriptors, spectrogram):
    """Forward one video; returns (fused, video, audio) boundary maps."""
    video = np.asarray(descriptors, dtype=np.float64)[None]
    audio = np.asarray(spectrogram, dtype=np.float64)[None]
    state = forward_batch(params, config, video, audio)
    return (
        BoundaryMap(np.clip(state["fused"][0], 0.0, 1.0)),
        BoundaryMap(state["m_v"][0]),
        BoundaryMap(state["m_a"][0]),
    )


# ---------------------------------------------------------------------------
# Training.
# ---------------------------------------------------------------------------


def build_batch(anns: list[VideoAnnotation], video, audio, max_duration: int):
    """Precompute the target tensors a training batch needs."""
    video = np.asarray(video, dtype=np.float64)
    audio = np.asarray(audio, dtype=np.float64)
    t = video.shape[2]
    m_gt = np.stack([gt_boundary_map(a, t, max_duration).values for a in anns])
    t_v, t_a = losses.frame_label_targets(anns)
    pair = np.array([0.0 if a.is_fake else 1.0 for a in anns])
    return {
        "anns": anns, "video": video, "audio": audio,
        "m_gt": m_gt, "t_v": t_v, "t_a": t_a, "pair": pair,
    }


def loss_and_grads(params: ModelParams, config: ModelConfig, batch, weights: LossWeights):
    """Total loss, parameter gradients, and per-component values for one batch."""
    state = forward_batch(params, config, batch["video"], batch["audio"])
    r_c = losses.contrastive_loss(state["f_v"], state["f_a"], batch["pair"], weights.delta)
    r_f = losses.frame_classification_loss_from_targets(
        state["y_v"], state["y_a"], batch["t_v"], batch["t_a"]
    )
    r_b = losses.boundary_loss(state["fused"], batch["m_gt"])
    r_bm = losses.modality_boundary_loss(
        state["m_v"], state["m_a"], batch["anns"], batch["m_gt"]
    )
    total = losses.total_loss(r_c, r_f, r_b, r_bm, weights)
    grads = backward_batch(params, config, state, total.gradients)
    components = {
        "contrastive": r_c.value, "frame": r_f.value,
        "boundary": r_b.value, "modality": r_bm.value, "total": total.value,
    }
    return total.value, grads, components


def train(
    params: ModelParams,
    config: ModelConfig,
    batch,
    weights: LossWeights,
    steps: int,
    learning_rate: float,
) -> tuple[ModelParams, list[float]]:
    """Plain full-batch gradient descent; returns updated params and the
    per-step loss trace.  Raises TrainingDiverged on a non-finite loss."""
    params = params.copy()
    trace: list[float] = []
    for step in range(steps):
        value, grads, _ = loss_and_grads(params, config, batch, weights)
        if not np.isfinite(value):
            raise TrainingDiverged(step, value)
        trace.append(value)
        if learning_rate != 0.0:
            for key, g in grads.items():
                params.arrays[key] -= learning_rate * g
    return params, trace


# ---------------------------------------------------------------------------
# Checkpoints.
# ---------------------------------------------------------------------------


def save_params(path: str | Path, params: ModelParams, config: ModelConfig) -> None:
    """Single-file checkpoint: named arrays plus a JSON config echo."""
    meta = json.dumps({"config": asdict(config)})
    with open(path, "wb") as fh:
        np.savez(fh, __meta__=np.array(meta), **params.arrays)


def load_params(path: str | Path) -> tuple[ModelParams, ModelConfig]:
    with np.load(path, allow_pickle=False) as data:
        meta = json.loads(str(data["__meta__"]))
        arrays = {k: np.array(data[k]) for k in data.files if k != "__meta__"}
    cfg = meta["config"]
    config = ModelConfig(
        encoder=EncoderConfig(**cfg["encoder"]),
        max_duration=int(cfg["max_duration"]),
        seed=int(cfg["seed"]),
    )
    return ModelParams(arrays), config
