"""Localization and classification metrics.

Average precision at fixed IoU thresholds over a single pooled prediction
ranking, average recall at per-video proposal budgets swept over IoU
thresholds 0.5:0.05:0.95, and video-level ROC AUC from the max-confidence
readout.  Matching is greedy in score order: each prediction takes the
highest-IoU still-unmatched ground-truth segment of its own video.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .types import Segment, VideoAnnotation, iou_1d

AP_THRESHOLDS = (0.5, 0.75, 0.95)
AR_BUDGETS = (100, 50, 20, 10)
IOU_SWEEP = tuple(round(0.5 + 0.05 * i, 2) for i in range(10))


@dataclass(frozen=True)
class EvalReport:
    ap: dict[float, float]  # IoU threshold -> AP
    ar: dict[int, float]  # proposal budget -> AR
    auc: float
    n_videos: int
    n_gt_segments: int
    n_predictions: int


def match_greedy(
    preds: list[Segment], gts: list[Segment], iou_thr: float
) -> list[tuple[int, bool]]:
    """Greedy one-to-one matching of score-sorted predictions to ground truth.

    Returns (prediction index, matched) per prediction.  Each prediction
    claims the unmatched ground-truth segment with the highest IoU, provided
    that IoU reaches the threshold; IoU ties go to the earliest segment.
    """
    for a, b in zip(preds, preds[1:]):
        if a.score < b.score:
            raise ValueError("predictions must be sorted by score descending")
    taken = [False] * len(gts)
    out = []
    for i, pred in enumerate(preds):
        best, best_iou = -1, 0.0
        for j, gt in enumerate(gts):
            if taken[j]:
                continue
            iou = iou_1d(pred, gt)
            if iou > best_iou:
                best, best_iou = j, iou
        if best >= 0 and best_iou >= iou_thr:
            taken[best] = True
            out.append((i, True))
        else:
            out.append((i, False))
    return out


def _ranked_predictions(predictions: dict[str, list[Segment]], anns: list[VideoAnnotation]):
    """Pool predictions into one global ranking (score desc, input order on ties)."""
    known = {a.video_id for a in anns}
    unknown = set(predictions) - known
    if unknown:
        raise ValueError(f"predictions reference unknown videos: {sorted(unknown)[:5]}")
    pooled = []
    order = 0
    for ann in anns:
        for seg in predictions.get(ann.video_id, ()):  # manifest order, then file order
            pooled.append((ann.video_id, seg, order))
            order += 1
    pooled.sort(key=lambda r: (-r[1].score, r[2]))
    return pooled


def _total_gt(anns: list[VideoAnnotation]) -> int:
    n_gt = sum(len(a.fake_segments) for a in anns)
    if n_gt == 0:
        raise ValueError("manifest contains no fake segments; AP/AR undefined")
    return n_gt


def average_precision(
    predictions: dict[str, list[Segment]], anns: list[VideoAnnotation], iou_thr: float
) -> float:
    """AP at one IoU threshold with all-point precision-envelope interpolation."""
    n_gt = _total_gt(anns)
    pooled = _ranked_predictions(predictions, anns)
    if not pooled:
        return 0.0

    gts = {a.video_id: list(a.fake_segments) for a in anns}
    taken = {vid: [False] * len(segs) for vid, segs in gts.items()}
    tp = np.zeros(len(pooled))
    for k, (vid, pred, _) in enumerate(pooled):
        best, best_iou = -1, 0.0
        for j, gt in enumerate(gts[vid]):
            if taken[vid][j]:
                continue
            iou = iou_1d(pred, gt)
            if iou > best_iou:
                best, best_iou = j, iou
        if best >= 0 and best_iou >= iou_thr:
            taken[vid][best] = True
            tp[k] = 1.0

    cum_tp = np.cumsum(tp)
    recall = cum_tp / n_gt
    precision = cum_tp / np.arange(1, len(pooled) + 1)
    envelope = np.maximum.accumulate(precision[::-1])[::-1]
    prev = np.concatenate([[0.0], recall[:-1]])
    return float(np.sum((recall - prev) * envelope))


def recall_at(
    predictions: dict[str, list[Segment]],
    anns: list[VideoAnnotation],
    budget: int,
    iou_thr: float,
) -> float:
    """Dataset recall with each video truncated to its top-`budget` predictions."""
    n_gt = _total_gt(anns)
    matched = 0
    for ann in anns:
        preds = list(predictions.get(ann.video_id, ()))
        preds.sort(key=lambda s: -s.score)  # stable: input order on ties
        preds = preds[:budget]
        flags = match_greedy(preds, list(ann.fake_segments), iou_thr)
        matched += sum(1 for _, ok in flags if ok)
    return matched / n_gt


def average_recall(
    predictions: dict[str, list[Segment]], anns: list[VideoAnnotation], budget: int
) -> float:
    """AR@budget: mean recall over the IoU sweep 0.5:0.05:0.95."""
    return float(
        sum(recall_at(predictions, anns, budget, thr) for thr in IOU_SWEEP) / len(IOU_SWEEP)
    )


def video_score(preds: list[Segment]) -> float:
    """Video-level fake confidence: highest segment score, 0 when empty."""
    return max((s.score for s in preds), default=0.0)


def auc(scores, labels) -> float:
    """ROC AUC via the rank statistic; ties count one half.

    labels are truthy for fake videos.  Raises on single-class input.
    """
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels, dtype=bool)
    if scores.shape != labels.shape or scores.ndim != 1:
        raise ValueError("scores and labels must be matching 1D sequences")
    n_pos = int(labels.sum())
    n_neg = labels.size - n_pos
    if n_pos == 0 or n_neg == 0:
        raise ValueError("AUC needs at least one fake and one real video")

    order = np.argsort(scores, kind="stable")
    ranks = np.empty(scores.size, dtype=np.float64)
    sorted_scores = scores[order]
    i = 0
    while i < scores.size:
        j = i
        while j + 1 < scores.size and sorted_scores[j + 1] == sorted_scores[i]:
            j += 1
        ranks[order[i : j + 1]] = 0.5 * (i + j) + 1.0  # average rank, 1-based
        i = j + 1
    pos_rank_sum = float(ranks[labels].sum())
    return (pos_rank_sum - n_pos * (n_pos + 1) / 2.0) / (n_pos * n_neg)


def filter_subset(anns: list[VideoAnnotation]) -> list[VideoAnnotation]:
    """Drop audio-only modified videos (eta_a=1, eta_v=0); real videos stay."""
    return [a for a in anns if not (a.eta_a == 1 and a.eta_v == 0)]


def evaluate(
    predictions: dict[str, list[Segment]], anns: list[VideoAnnotation]
) -> EvalReport:
    """Full metric suite over one manifest + prediction set."""
    ap = {thr: average_precision(predictions, anns, thr) for thr in AP_THRESHOLDS}
    ar = {n: average_recall(predictions, anns, n) for n in AR_BUDGETS}
    scores = [video_score(predictions.get(a.video_id, [])) for a in anns]
    labels = [a.is_fake for a in anns]
    return EvalReport(
        ap=ap,
        ar=ar,
        auc=auc(scores, labels),
        n_videos=len(anns),
        n_gt_segments=sum(len(a.fake_segments) for a in anns),
        n_predictions=sum(len(v) for v in predictions.values()),
    )


def report_to_dict(report: EvalReport) -> dict:
    """JSON layout with AP keyed 0.5/0.75/0.95 and AR keyed 100/50/20/10."""
    return {
        "ap": {f"{thr:g}": report.ap[thr] for thr in AP_THRESHOLDS},
        "ar": {str(n): report.ar[n] for n in AR_BUDGETS},
        "auc": report.auc,
        "counts": {
            "videos": report.n_videos,
            "gt_segments": report.n_gt_segments,
            "predictions": report.n_predictions,
        },
    }
