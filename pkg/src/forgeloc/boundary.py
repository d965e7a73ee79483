"""Boundary maps: dense per-cell segment confidences over a D x T grid.

Cell (d, t) scores the candidate segment covering frames [t, t+d+1), so
duration index 0 means a one-frame proposal.  Cells whose window would run
past the last frame are invalid and pinned to 0.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .types import Segment, VideoAnnotation


def valid_cell_mask(max_duration: int, frames: int) -> np.ndarray:
    """Boolean (D, T) mask; cell (d, t) is valid iff t + d + 1 <= T."""
    d = np.arange(max_duration)[:, None]
    t = np.arange(frames)[None, :]
    return t + d + 1 <= frames


@dataclass(frozen=True, eq=False)
class BoundaryMap:
    """Immutable D x T grid of proposal confidences in [0, 1]."""

    values: np.ndarray  # (max_duration, frames)
    valid_mask: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        arr = np.asarray(self.values, dtype=np.float64)
        if arr.ndim != 2 or arr.shape[0] < 1 or arr.shape[1] < 1:
            raise ValueError(f"boundary map must be a non-empty 2D grid, got {arr.shape}")
        mask = valid_cell_mask(*arr.shape)
        if np.any(arr[~mask] != 0.0):
            raise ValueError("invalid cells must hold value 0")
        if arr[mask].size and (arr[mask].min() < 0.0 or arr[mask].max() > 1.0):
            raise ValueError("valid cell values must lie in [0, 1]")
        arr = arr.copy()
        arr.flags.writeable = False
        mask.flags.writeable = False
        object.__setattr__(self, "values", arr)
        object.__setattr__(self, "valid_mask", mask)

    @property
    def max_duration(self) -> int:
        return self.values.shape[0]

    @property
    def frames(self) -> int:
        return self.values.shape[1]

    @classmethod
    def zeros(cls, max_duration: int, frames: int) -> "BoundaryMap":
        return cls(np.zeros((max_duration, frames)))


def gt_boundary_map(ann: VideoAnnotation, frames: int, max_duration: int) -> BoundaryMap:
    """Ground-truth boundary map: cell (d, t) holds the best IoU between the
    candidate window [t, t+d+1) and any fake segment; all zeros for real videos.
    """
    if frames < 1 or max_duration < 1:
        raise ValueError("frames and max_duration must be positive")
    D, T = max_duration, frames
    values = np.zeros((D, T), dtype=np.float64)
    if ann.fake_segments:
        d = np.arange(D, dtype=np.float64)[:, None]
        t = np.arange(T, dtype=np.float64)[None, :]
        win_start, win_end = t, t + d + 1.0  # frame units
        for seg in ann.fake_segments:
            s, e = seg.start * ann.fps, seg.end * ann.fps
            inter = np.minimum(win_end, e) - np.maximum(win_start, s)
            np.clip(inter, 0.0, None, out=inter)
            union = (d + 1.0) + (e - s) - inter
            np.maximum(values, inter / union, out=values)
    values[~valid_cell_mask(D, T)] = 0.0
    return BoundaryMap(values)


def modality_gt_map(
    ann: VideoAnnotation, modality: str, frames: int, max_duration: int
) -> BoundaryMap:
    """Per-modality target map: the ground-truth map if the modality was
    modified, else the all-zero real-video map."""
    if ann.eta(modality):
        return gt_boundary_map(ann, frames, max_duration)
    return BoundaryMap.zeros(max_duration, frames)


def extract_proposals(bmap: BoundaryMap, fps: float, score_floor: float) -> list[Segment]:
    """One proposal per valid cell at or above the floor.

    Cell (d, t) maps to [t/fps, (t+d+1)/fps) with the cell value as score.
    Sorted by score descending; ties by (start, duration) ascending.
    """
    keep = bmap.valid_mask & (bmap.values >= score_floor)
    ds, ts = np.nonzero(keep)
    proposals = [
        Segment(t / fps, (t + d + 1) / fps, score=bmap.values[d, t]) for d, t in zip(ds, ts)
    ]
    proposals.sort(key=lambda s: (-s.score, s.start, s.duration))
    return proposals


def save_boundary_map(path: str | Path, bmap: BoundaryMap, fps: float) -> None:
    """JSON serialization: header {D, T, fps} plus row-major cell values."""
    payload = {
        "D": bmap.max_duration,
        "T": bmap.frames,
        "fps": fps,
        "values": bmap.values.reshape(-1).tolist(),
    }
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh)


def load_boundary_map(path: str | Path) -> tuple[BoundaryMap, float]:
    with open(path, "r", encoding="utf-8") as fh:
        payload = json.load(fh)
    D, T = int(payload["D"]), int(payload["T"])
    values = np.asarray(payload["values"], dtype=np.float64)
    if values.size != D * T:
        raise ValueError(f"{path}: expected {D * T} values, got {values.size}")
    return BoundaryMap(values.reshape(D, T)), float(payload["fps"])
