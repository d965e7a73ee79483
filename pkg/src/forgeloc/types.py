"""Shared domain types: segments, annotations, features, and frame labels.

All times are in seconds unless a name says otherwise.  Segments are
half-open intervals [start, end).  Everything here is an immutable value
after construction and safe to share between threads.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Optional

import numpy as np

_TIME_EPS = 1e-9

VIDEO = "video"
AUDIO = "audio"
MODALITIES = (VIDEO, AUDIO)


@dataclass(frozen=True)
class Segment:
    """A half-open time interval with a confidence score (1.0 for ground truth)."""

    start: float
    end: float
    score: float = 1.0

    def __post_init__(self):
        if not (np.isfinite(self.start) and np.isfinite(self.end) and np.isfinite(self.score)):
            raise ValueError(f"segment fields must be finite: {self!r}")
        if self.start < 0:
            raise ValueError(f"segment start must be >= 0: {self!r}")
        if self.end <= self.start:
            raise ValueError(f"segment end must exceed start: {self!r}")
        if not 0.0 <= self.score <= 1.0:
            raise ValueError(f"segment score must be in [0, 1]: {self!r}")

    @property
    def duration(self) -> float:
        return self.end - self.start


def iou_1d(a: Segment, b: Segment) -> float:
    """Temporal intersection-over-union of two segments; 0 when disjoint."""
    inter = min(a.end, b.end) - max(a.start, b.start)
    if inter <= 0.0:
        return 0.0
    union = (a.end - a.start) + (b.end - b.start) - inter
    return inter / union


@dataclass(frozen=True)
class VideoAnnotation:
    """Per-video metadata: timing, which modalities were modified, fake segments.

    eta_v / eta_a are 0/1 flags; a fully real video has both flags 0 and no
    fake segments.  Fake segments are pairwise non-overlapping and lie
    within [0, duration].
    """

    video_id: str
    duration: float
    fps: float
    n_frames: int
    eta_v: int
    eta_a: int
    fake_segments: tuple[Segment, ...] = ()
    split: Optional[str] = None

    def __post_init__(self):
        if self.duration <= 0 or self.fps <= 0:
            raise ValueError(f"{self.video_id}: duration and fps must be positive")
        if self.eta_v not in (0, 1) or self.eta_a not in (0, 1):
            raise ValueError(f"{self.video_id}: eta flags must be 0 or 1")
        if abs(self.n_frames - self.duration * self.fps) > 0.5 + _TIME_EPS:
            raise ValueError(
                f"{self.video_id}: n_frames={self.n_frames} inconsistent with "
                f"duration*fps={self.duration * self.fps:.6f}"
            )
        if self.eta_v == 0 and self.eta_a == 0 and self.fake_segments:
            raise ValueError(f"{self.video_id}: unmodified video cannot carry fake segments")
        object.__setattr__(self, "fake_segments", tuple(self.fake_segments))
        ordered = sorted(self.fake_segments, key=lambda s: s.start)
        for seg in ordered:
            if seg.start < -_TIME_EPS or seg.end > self.duration + _TIME_EPS:
                raise ValueError(f"{self.video_id}: segment {seg} outside [0, {self.duration}]")
        for prev, cur in zip(ordered, ordered[1:]):
            if cur.start < prev.end - _TIME_EPS:
                raise ValueError(f"{self.video_id}: overlapping fake segments {prev} and {cur}")

    @property
    def is_fake(self) -> bool:
        return bool(self.eta_v or self.eta_a)

    def eta(self, modality: str) -> int:
        if modality == VIDEO:
            return self.eta_v
        if modality == AUDIO:
            return self.eta_a
        raise ValueError(f"unknown modality {modality!r}")


@dataclass(frozen=True)
class FeatureSequence:
    """Per-frame features for one modality, stored as a channels x frames matrix."""

    data: np.ndarray  # (channels, frames)

    def __post_init__(self):
        arr = np.asarray(self.data, dtype=np.float64)
        if arr.ndim != 2 or arr.shape[0] < 1 or arr.shape[1] < 1:
            raise ValueError(f"features must be a non-empty 2D matrix, got shape {arr.shape}")
        if not np.all(np.isfinite(arr)):
            raise ValueError("features must be finite")
        arr = arr.copy()
        arr.flags.writeable = False
        object.__setattr__(self, "data", arr)

    @property
    def channels(self) -> int:
        return self.data.shape[0]

    @property
    def frames(self) -> int:
        return self.data.shape[1]


@dataclass(frozen=True)
class FrameLabelSequence:
    """Length-T vector of per-frame labels: binary ground truth or (0,1) predictions."""

    labels: np.ndarray  # (frames,)

    def __post_init__(self):
        arr = np.asarray(self.labels, dtype=np.float64)
        if arr.ndim != 1:
            raise ValueError(f"labels must be a 1D vector, got shape {arr.shape}")
        if arr.size and (arr.min() < 0.0 or arr.max() > 1.0):
            raise ValueError("labels must lie in [0, 1]")
        arr = arr.copy()
        arr.flags.writeable = False
        object.__setattr__(self, "labels", arr)

    @property
    def frames(self) -> int:
        return self.labels.shape[0]

    @property
    def is_binary(self) -> bool:
        return bool(np.all((self.labels == 0.0) | (self.labels == 1.0)))


@dataclass(frozen=True)
class VideoMeta:
    """Raw-media dimensions; media itself is never decoded here."""

    height: int
    width: int
    channels: int
    spectrogram_frames: int  # T_a
    mel_bins: int

    def __post_init__(self):
        for name in ("height", "width", "channels", "spectrogram_frames", "mel_bins"):
            if getattr(self, name) <= 0:
                raise ValueError(f"VideoMeta.{name} must be positive")


def frame_labels(ann: VideoAnnotation) -> FrameLabelSequence:
    """Binary per-frame fake labels for an annotation.

    Frame t is fake when the frame interval [t/fps, (t+1)/fps) overlaps some
    fake segment by more than half a frame period.  A fully real video maps
    to the all-zero label vector.
    """
    T = ann.n_frames
    out = np.zeros(T, dtype=np.float64)
    if not ann.fake_segments:
        return FrameLabelSequence(out)
    t = np.arange(T, dtype=np.float64)
    f_start = t / ann.fps
    f_end = (t + 1.0) / ann.fps
    half = 0.5 / ann.fps
    for seg in ann.fake_segments:
        overlap = np.minimum(f_end, seg.end) - np.maximum(f_start, seg.start)
        out[overlap > half] = 1.0
    return FrameLabelSequence(out)


def modality_labels(ann: VideoAnnotation, modality: str) -> FrameLabelSequence:
    """Per-modality frame labels: the fake labels if the modality was modified, else zeros."""
    if ann.eta(modality):
        return frame_labels(ann)
    return FrameLabelSequence(np.zeros(ann.n_frames, dtype=np.float64))


# ---------------------------------------------------------------------------
# Manifest file: JSON-lines, one annotation per line.
# ---------------------------------------------------------------------------


def annotation_to_dict(ann: VideoAnnotation) -> dict:
    rec = {
        "video_id": ann.video_id,
        "duration": ann.duration,
        "fps": ann.fps,
        "n_frames": ann.n_frames,
        "eta_v": ann.eta_v,
        "eta_a": ann.eta_a,
        "fake_segments": [{"start": s.start, "end": s.end} for s in ann.fake_segments],
    }
    if ann.split is not None:
        rec["split"] = ann.split
    return rec


def annotation_from_dict(rec: dict) -> VideoAnnotation:
    return VideoAnnotation(
        video_id=str(rec["video_id"]),
        duration=float(rec["duration"]),
        fps=float(rec["fps"]),
        n_frames=int(rec["n_frames"]),
        eta_v=int(rec["eta_v"]),
        eta_a=int(rec["eta_a"]),
        fake_segments=tuple(
            Segment(float(s["start"]), float(s["end"])) for s in rec.get("fake_segments", ())
        ),
        split=rec.get("split"),
    )


def write_manifest(path: str | Path, annotations: Iterable[VideoAnnotation]) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for ann in annotations:
            fh.write(json.dumps(annotation_to_dict(ann)) + "\n")


def read_manifest(path: str | Path) -> list[VideoAnnotation]:
    out: list[VideoAnnotation] = []
    with open(path, "r", encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                out.append(annotation_from_dict(json.loads(line)))
            except (KeyError, ValueError, TypeError) as exc:
                raise ValueError(f"{path}:{line_no}: bad manifest record: {exc}") from exc
    ids = [a.video_id for a in out]
    if len(set(ids)) != len(ids):
        raise ValueError(f"{path}: duplicate video_id in manifest")
    return out
