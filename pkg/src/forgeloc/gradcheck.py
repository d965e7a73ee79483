"""Central finite-difference verification of every analytic gradient.

Each check draws seeded random instances, compares the analytic gradient of
a scalar objective against central differences, and reports the worst
norm-relative error.  Loss-level and fusion checks must meet 1e-4; the
end-to-end model check (through encoders, classifiers, boundary heads, and
fusion into the weighted total loss) must meet 1e-3.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import fixtures, fusion, losses, model, ops
from .boundary import valid_cell_mask
from .types import Segment, VideoAnnotation

LOSS_TOL = 1e-4
MODEL_TOL = 1e-3
FD_STEP = 1e-5


@dataclass
class CheckRow:
    name: str
    instances: int
    max_rel_err: float
    tolerance: float

    @property
    def passed(self) -> bool:
        return self.max_rel_err <= self.tolerance


def _rand_ann(rng: np.random.Generator, frames: int, index: int) -> VideoAnnotation:
    mod = ("real", "video", "audio", "both")[int(rng.integers(0, 4))]
    segments = ()
    if mod != "real":
        start = int(rng.integers(0, frames))
        length = int(rng.integers(1, max(2, frames - start + 1)))
        segments = (Segment(float(start), float(min(start + length, frames))),)
    return VideoAnnotation(
        video_id=f"g{index}",
        duration=float(frames),
        fps=1.0,
        n_frames=frames,
        eta_v=int(mod in ("video", "both")),
        eta_a=int(mod in ("audio", "both")),
        fake_segments=segments,
    )


def _fd_check(value_fn, tensors: dict[str, np.ndarray], analytic: dict[str, np.ndarray]) -> float:
    """Worst relative error between analytic grads and central differences."""
    worst = 0.0
    for name, arr in tensors.items():
        def f(x, _name=name):
            swapped = dict(tensors)
            swapped[_name] = x
            return value_fn(swapped)

        numeric = ops.central_difference(f, arr, FD_STEP)
        worst = max(worst, ops.relative_error(analytic[name], numeric))
    return worst


def _shapes(rng: np.random.Generator):
    n = int(rng.integers(1, 5))
    c = int(rng.integers(1, 9))
    t = int(rng.integers(2, 17))
    d = int(rng.integers(1, 9))
    return n, c, t, d


def check_contrastive(seed: int, instances: int) -> CheckRow:
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(instances):
        n, c, t, _ = _shapes(rng)
        tensors = {
            "f_v": rng.normal(size=(n, c, t)),
            "f_a": rng.normal(size=(n, c, t)),
        }
        y = rng.integers(0, 2, size=n).astype(float)

        def value(ts):
            return losses.contrastive_loss(ts["f_v"], ts["f_a"], y, 0.99).value

        report = losses.contrastive_loss(tensors["f_v"], tensors["f_a"], y, 0.99)
        worst = max(worst, _fd_check(value, tensors, report.gradients))
    return CheckRow("contrastive_loss", instances, worst, LOSS_TOL)


def check_frame(seed: int, instances: int) -> CheckRow:
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(instances):
        n, _, t, _ = _shapes(rng)
        anns = [_rand_ann(rng, t, i) for i in range(n)]
        tensors = {
            "y_v": rng.uniform(0.05, 0.95, size=(n, t)),
            "y_a": rng.uniform(0.05, 0.95, size=(n, t)),
        }

        def value(ts):
            return losses.frame_classification_loss(ts["y_v"], ts["y_a"], anns).value

        report = losses.frame_classification_loss(tensors["y_v"], tensors["y_a"], anns)
        worst = max(worst, _fd_check(value, tensors, report.gradients))
    return CheckRow("frame_classification_loss", instances, worst, LOSS_TOL)


def check_boundary(seed: int, instances: int) -> CheckRow:
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(instances):
        n, _, t, d = _shapes(rng)
        target = rng.uniform(size=(n, d, t))
        tensors = {"m_hat": rng.uniform(size=(n, d, t))}

        def value(ts):
            return losses.boundary_loss(ts["m_hat"], target).value

        report = losses.boundary_loss(tensors["m_hat"], target)
        worst = max(worst, _fd_check(value, tensors, report.gradients))
    return CheckRow("boundary_loss", instances, worst, LOSS_TOL)


def check_modality_boundary(seed: int, instances: int) -> CheckRow:
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(instances):
        n, _, t, d = _shapes(rng)
        anns = [_rand_ann(rng, t, i) for i in range(n)]
        m_gt = rng.uniform(size=(n, d, t))
        tensors = {
            "m_v": rng.uniform(size=(n, d, t)),
            "m_a": rng.uniform(size=(n, d, t)),
        }

        def value(ts):
            return losses.modality_boundary_loss(ts["m_v"], ts["m_a"], anns, m_gt).value

        report = losses.modality_boundary_loss(tensors["m_v"], tensors["m_a"], anns, m_gt)
        worst = max(worst, _fd_check(value, tensors, report.gradients))
    return CheckRow("modality_boundary_loss", instances, worst, LOSS_TOL)


def check_total(seed: int, instances: int) -> CheckRow:
    rng = np.random.default_rng(seed)
    weights = losses.LossWeights()
    worst = 0.0
    for _ in range(instances):
        n, c, t, d = _shapes(rng)
        anns = [_rand_ann(rng, t, i) for i in range(n)]
        y = np.array([0.0 if a.is_fake else 1.0 for a in anns])
        m_gt = rng.uniform(size=(n, d, t))
        tensors = {
            "f_v": rng.normal(size=(n, c, t)),
            "f_a": rng.normal(size=(n, c, t)),
            "y_v": rng.uniform(0.05, 0.95, size=(n, t)),
            "y_a": rng.uniform(0.05, 0.95, size=(n, t)),
            "m_hat": rng.uniform(size=(n, d, t)),
            "m_v": rng.uniform(size=(n, d, t)),
            "m_a": rng.uniform(size=(n, d, t)),
        }

        def reports(ts):
            return losses.total_loss(
                losses.contrastive_loss(ts["f_v"], ts["f_a"], y, weights.delta),
                losses.frame_classification_loss(ts["y_v"], ts["y_a"], anns),
                losses.boundary_loss(ts["m_hat"], m_gt),
                losses.modality_boundary_loss(ts["m_v"], ts["m_a"], anns, m_gt),
                weights,
            )

        report = reports(tensors)
        worst = max(worst, _fd_check(lambda ts: reports(ts).value, tensors, report.gradients))
    return CheckRow("total_loss", instances, worst, LOSS_TOL)


def check_fusion(seed: int, instances: int) -> CheckRow:
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(instances):
        n, _, t, d = _shapes(rng)
        mask = valid_cell_mask(d, t)[None]
        upstream = rng.normal(size=(n, d, t))
        tensors = {
            "m_v": rng.uniform(size=(n, d, t)) * mask,
            "m_a": rng.uniform(size=(n, d, t)) * mask,
            "w_v": ops.softplus(rng.normal(size=(n, d, t))) * mask,
            "w_a": ops.softplus(rng.normal(size=(n, d, t))) * mask,
        }

        def value(ts):
            fused, _ = fusion.fuse_arrays(ts["m_v"], ts["m_a"], ts["w_v"], ts["w_a"], mask)
            return float(np.sum(upstream * fused))

        _, partials = fusion.fuse_arrays(
            tensors["m_v"], tensors["m_a"], tensors["w_v"], tensors["w_a"], mask
        )
        analytic = {k: upstream * partials[k] for k in tensors}
        worst = max(worst, _fd_check(value, tensors, analytic))
    return CheckRow("fusion", instances, worst, LOSS_TOL)


def check_model(seed: int = 0) -> CheckRow:
    """End-to-end parameter gradients on a tiny configuration."""
    fx = fixtures.synth_fixtures(
        seed=seed, n_videos=4, frames=8, feature_dim=4, max_duration=4, separability=1.0
    )
    config = model.ModelConfig(
        encoder=model.EncoderConfig(feature_dim=4, video_input_dim=4, audio_input_dim=4),
        max_duration=4,
        seed=seed,
    )
    params = model.init_params(config)
    anns = fx.annotations
    batch = model.build_batch(
        anns,
        np.stack([fx.video_features[a.video_id] for a in anns]),
        np.stack([fx.spectrograms[a.video_id] for a in anns]),
        config.max_duration,
    )
    weights = losses.LossWeights()
    _, grads, _ = model.loss_and_grads(params, config, batch, weights)

    worst = 0.0
    for name, arr in params.arrays.items():
        def value(x, _name=name):
            trial = params.copy()
            trial.arrays[_name] = x
            v, _, _ = model.loss_and_grads(trial, config, batch, weights)
            return v

        numeric = ops.central_difference(value, arr, FD_STEP)
        worst = max(worst, ops.relative_error(grads[name], numeric))
    return CheckRow("model_end_to_end", 1, worst, MODEL_TOL)


def run_all(seed: int = 0, instances: int = 20) -> list[CheckRow]:
    rows = [
        check_contrastive(seed, instances),
        check_frame(seed + 1, instances),
        check_boundary(seed + 2, instances),
        check_modality_boundary(seed + 3, instances),
        check_total(seed + 4, instances),
        check_fusion(seed + 5, instances),
        check_model(seed + 6),
    ]
    return rows
