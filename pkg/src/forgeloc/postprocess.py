"""Soft non-maximum suppression and boundary-map decoding.

The dense boundary map scores every proposal window, so neighbouring cells
carry many near-duplicates of each true segment.  Soft-NMS repeatedly takes
the highest-scoring proposal and decays the scores of everything that
overlaps it, instead of deleting overlaps outright.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, replace
from pathlib import Path

from .boundary import BoundaryMap, extract_proposals
from .types import Segment, VideoAnnotation, iou_1d

GAUSSIAN = "gaussian"
LINEAR = "linear"


@dataclass(frozen=True)
class SnmsConfig:
    """Soft-NMS parameters; defaults follow the validation-search convention
    of tuning them per dataset rather than fixing them a priori."""

    method: str = GAUSSIAN
    sigma: float = 0.3
    iou_cut: float = 0.3
    score_floor: float = 0.01
    top_k: int | None = 100

    def __post_init__(self):
        if self.method not in (GAUSSIAN, LINEAR):
            raise ValueError(f"unknown soft-nms method {self.method!r}")
        if self.method == GAUSSIAN and self.sigma <= 0:
            raise ValueError("gaussian soft-nms needs sigma > 0")
        if self.method == LINEAR and not 0.0 <= self.iou_cut <= 1.0:
            raise ValueError("linear soft-nms needs iou_cut in [0, 1]")
        if self.top_k is not None and self.top_k < 0:
            raise ValueError("top_k must be nonnegative")


def _decay(iou: float, config: SnmsConfig) -> float:
    if config.method == GAUSSIAN:
        return math.exp(-(iou * iou) / config.sigma)
    return 1.0 - iou if iou > config.iou_cut else 1.0


def soft_nms(proposals: list[Segment], config: SnmsConfig = SnmsConfig()) -> list[Segment]:
    """Sequential Soft-NMS.

    Each round keeps the highest-scoring remaining proposal (ties: earlier
    start, then shorter duration), decays every other score by the overlap
    penalty, and drops proposals that fell below the score floor.  Kept
    proposals retain their selection-time score, so the output is sorted
    by score descending.
    """
    pool = [(seg, seg.score) for seg in proposals if seg.score >= config.score_floor]
    limit = math.inf if config.top_k is None else config.top_k
    out: list[Segment] = []
    while pool and len(out) < limit:
        best = min(range(len(pool)), key=lambda i: (-pool[i][1], pool[i][0].start, pool[i][0].duration))
        seg, score = pool.pop(best)
        out.append(Segment(seg.start, seg.end, score=score))
        survivors = []
        for other, s in pool:
            s2 = s * _decay(iou_1d(seg, other), config)
            if s2 >= config.score_floor:
                survivors.append((other, s2))
        pool = survivors
    return out


def decode(bmap: BoundaryMap, fps: float, config: SnmsConfig = SnmsConfig()) -> list[Segment]:
    """Boundary map -> final ranked segment list (dense proposals + Soft-NMS)."""
    return soft_nms(extract_proposals(bmap, fps, config.score_floor), config)


# ---------------------------------------------------------------------------
# Prediction interchange file: JSON-lines of {video_id, start, end, score}.
# ---------------------------------------------------------------------------


def write_predictions(path: str | Path, predictions: dict[str, list[Segment]]) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for video_id, segs in predictions.items():
            for seg in segs:
                rec = {"video_id": video_id, "start": seg.start, "end": seg.end,
                       "score": seg.score}
                fh.write(json.dumps(rec) + "\n")


def read_predictions(path: str | Path) -> dict[str, list[Segment]]:
    out: dict[str, list[Segment]] = {}
    with open(path, "r", encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                rec = json.loads(line)
                seg = Segment(float(rec["start"]), float(rec["end"]), float(rec["score"]))
                out.setdefault(str(rec["video_id"]), []).append(seg)
            except (KeyError, ValueError, TypeError) as exc:
                raise ValueError(f"{path}:{line_no}: bad prediction record: {exc}") from exc
    return out


def search_snms(
    maps: dict[str, tuple[BoundaryMap, float]],
    anns: list[VideoAnnotation],
    sigmas=(0.1, 0.3, 0.5, 1.0),
    score_floors=(0.01, 0.1, 0.3),
    top_ks=(100,),
    methods=(GAUSSIAN,),
    iou_cuts=(0.3,),
    iou_thr: float = 0.5,
) -> list[tuple[SnmsConfig, float]]:
    """Grid-search Soft-NMS parameters against a validation manifest.

    Scores each configuration by average precision at `iou_thr` over the
    decoded maps; returns (config, ap) pairs sorted best-first.
    """
    from .evaluation import average_precision

    base = SnmsConfig()
    configs = []
    for method in methods:
        for floor in score_floors:
            for k in top_ks:
                if method == GAUSSIAN:
                    configs += [replace(base, method=method, sigma=s, score_floor=floor,
                                        top_k=k) for s in sigmas]
                else:
                    configs += [replace(base, method=method, iou_cut=c, score_floor=floor,
                                        top_k=k) for c in iou_cuts]
    results = []
    for config in configs:
        preds = {vid: decode(bmap, fps, config) for vid, (bmap, fps) in maps.items()}
        results.append((config, average_precision(preds, anns, iou_thr)))
    results.sort(key=lambda r: -r[1])
    return results
