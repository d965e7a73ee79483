"""Seeded synthetic fixtures standing in for a real dataset at desk scale.

Each fixture video carries per-frame video descriptors and a mel-style
spectrogram.  Both modalities share a latent per-frame signal on real
content; a modified modality swaps in a decorrelated latent on the fake
frames plus a fixed offset direction scaled by `separability`.  The four
modification types (real / video / audio / both) appear in equal
proportion, and every video gets a train/val/test split tag balanced
within its type.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .types import Segment, VideoAnnotation, read_manifest, write_manifest

MOD_TYPES = ("real", "video", "audio", "both")
SPLITS = ("train",) * 6 + ("val",) * 2 + ("test",) * 2  # 60/20/20 per type


@dataclass
class FixtureSet:
    annotations: list[VideoAnnotation]
    video_features: dict[str, np.ndarray]  # video_id -> (feature_dim, T)
    spectrograms: dict[str, np.ndarray]  # video_id -> (T_a, feature_dim)
    config: dict = field(default_factory=dict)

    def split(self, name: str) -> list[VideoAnnotation]:
        return [a for a in self.annotations if a.split == name]


def _sample_segments(rng: np.random.Generator, frames: int, two_prob: float,
                     segment_frames: tuple[int, int]):
    """1-2 grid-aligned fake segments with a gap of >= 2 frames between them."""
    lo, hi = segment_frames
    n_seg = 2 if rng.random() < two_prob else 1
    while True:
        lengths = rng.integers(lo, hi + 1, size=n_seg)
        starts = rng.integers(0, frames - lengths + 1)
        order = np.argsort(starts)
        starts, lengths = starts[order], lengths[order]
        if n_seg == 1 or starts[1] >= starts[0] + lengths[0] + 2:
            return list(zip(starts.tolist(), lengths.tolist()))


def synth_fixtures(
    seed: int,
    n_videos: int,
    frames: int,
    feature_dim: int,
    max_duration: int,
    separability: float,
    fps: float = 4.0,
    pool_ratio: int = 4,
    noise: float = 0.3,
    two_segment_prob: float = 0.3,
    segment_frames: tuple[int, int] = (1, 2),
) -> FixtureSet:
    """Deterministic fixture bundle; identical seeds give identical bytes."""
    if min(n_videos, frames, feature_dim, max_duration, pool_ratio) < 1:
        raise ValueError("all fixture dimensions must be positive")
    if frames < 4:
        raise ValueError("need at least 4 frames to place fake segments")
    if not 1 <= segment_frames[0] <= segment_frames[1] <= min(max_duration, frames // 2):
        raise ValueError("segment_frames must fit within max_duration and the video")
    rng = np.random.default_rng(seed)
    t_a = frames * pool_ratio
    # Dataset-level offset directions, one per modality.
    u_v = rng.normal(size=feature_dim)
    u_v /= np.linalg.norm(u_v)
    u_a = rng.normal(size=feature_dim)
    u_a /= np.linalg.norm(u_a)

    annotations = []
    video_features = {}
    spectrograms = {}
    type_counters = {m: 0 for m in MOD_TYPES}
    for i in range(n_videos):
        mod = MOD_TYPES[i % len(MOD_TYPES)]
        split = SPLITS[type_counters[mod] % len(SPLITS)]
        type_counters[mod] += 1
        video_id = f"vid{i:05d}"

        segments = [] if mod == "real" else _sample_segments(
            rng, frames, two_segment_prob, segment_frames
        )
        fake_frames = np.zeros(frames, dtype=bool)
        for s, length in segments:
            fake_frames[s : s + length] = True

        latent = rng.normal(size=(feature_dim, frames))
        vid = latent + noise * rng.normal(size=(feature_dim, frames))
        aud = np.repeat(latent, pool_ratio, axis=1) + noise * rng.normal(
            size=(feature_dim, t_a)
        )
        if mod in ("video", "both"):
            alt = rng.normal(size=(feature_dim, frames))
            vid[:, fake_frames] = (
                alt[:, fake_frames]
                + noise * rng.normal(size=(feature_dim, int(fake_frames.sum())))
                + separability * u_v[:, None]
            )
        if mod in ("audio", "both"):
            alt = rng.normal(size=(feature_dim, frames))
            fake_cols = np.repeat(fake_frames, pool_ratio)
            aud[:, fake_cols] = (
                np.repeat(alt, pool_ratio, axis=1)[:, fake_cols]
                + noise * rng.normal(size=(feature_dim, int(fake_cols.sum())))
                + separability * u_a[:, None]
            )

        annotations.append(
            VideoAnnotation(
                video_id=video_id,
                duration=frames / fps,
                fps=fps,
                n_frames=frames,
                eta_v=int(mod in ("video", "both")),
                eta_a=int(mod in ("audio", "both")),
                fake_segments=tuple(
                    Segment(s / fps, (s + length) / fps) for s, length in segments
                ),
                split=split,
            )
        )
        video_features[video_id] = vid
        spectrograms[video_id] = aud.T  # stored as (T_a, mel_bins)

    config = {
        "seed": seed, "n_videos": n_videos, "frames": frames,
        "feature_dim": feature_dim, "max_duration": max_duration,
        "separability": separability, "fps": fps, "pool_ratio": pool_ratio,
        "noise": noise, "two_segment_prob": two_segment_prob,
        "segment_frames": list(segment_frames),
    }
    return FixtureSet(annotations, video_features, spectrograms, config)


def save_fixtures(directory: str | Path, fixtures: FixtureSet) -> None:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    write_manifest(directory / "manifest.jsonl", fixtures.annotations)
    arrays = {f"v:{vid}": arr for vid, arr in fixtures.video_features.items()}
    arrays.update({f"a:{vid}": arr for vid, arr in fixtures.spectrograms.items()})
    with open(directory / "arrays.npz", "wb") as fh:
        np.savez(fh, **arrays)
    (directory / "meta.json").write_text(json.dumps(fixtures.config, indent=2))


def load_fixtures(directory: str | Path) -> FixtureSet:
    directory = Path(directory)
    annotations = read_manifest(directory / "manifest.jsonl")
    video_features = {}
    spectrograms = {}
    with np.load(directory / "arrays.npz") as data:
        for key in data.files:
            kind, vid = key.split(":", 1)
            (video_features if kind == "v" else spectrograms)[vid] = np.array(data[key])
    config = json.loads((directory / "meta.json").read_text())
    return FixtureSet(annotations, video_features, spectrograms, config)


# ---------------------------------------------------------------------------
# Manifest statistics.
# ---------------------------------------------------------------------------


def _hist(values: list[float], bin_width: float) -> dict[str, int]:
    out: dict[str, int] = {}
    for v in values:
        lo = int(v / bin_width) * bin_width
        label = f"{lo:g}-{lo + bin_width:g}"
        out[label] = out.get(label, 0) + 1
    return out


def modification_type(ann: VideoAnnotation) -> str:
    if ann.eta_v and ann.eta_a:
        return "both"
    if ann.eta_v:
        return "video"
    if ann.eta_a:
        return "audio"
    return "real"


def manifest_stats(
    anns: list[VideoAnnotation], segment_bin: float = 0.25, video_bin: float = 2.0
) -> dict:
    """Distribution summary: segment lengths, video lengths, segment counts,
    and modification-type proportions."""
    seg_lengths = [s.duration for a in anns for s in a.fake_segments]
    vid_lengths = [a.duration for a in anns]
    type_counts = {m: 0 for m in MOD_TYPES}
    count_hist: dict[str, int] = {}
    for ann in anns:
        type_counts[modification_type(ann)] += 1
        key = str(len(ann.fake_segments))
        count_hist[key] = count_hist.get(key, 0) + 1
    n = len(anns)
    return {
        "videos": n,
        "fake_videos": sum(1 for a in anns if a.is_fake),
        "segments": len(seg_lengths),
        "modification_types": type_counts,
        "modification_proportions": {
            m: (c / n if n else 0.0) for m, c in type_counts.items()
        },
        "segment_count_hist": count_hist,
        "segment_length": {
            "mean": float(np.mean(seg_lengths)) if seg_lengths else 0.0,
            "min": min(seg_lengths, default=0.0),
            "max": max(seg_lengths, default=0.0),
            "bin_width": segment_bin,
            "hist": _hist(seg_lengths, segment_bin),
        },
        "video_length": {
            "mean": float(np.mean(vid_lengths)) if vid_lengths else 0.0,
            "min": min(vid_lengths, default=0.0),
            "max": max(vid_lengths, default=0.0),
            "bin_width": video_bin,
            "hist": _hist(vid_lengths, video_bin),
        },
    }
