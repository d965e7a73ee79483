"""Soft-NMS against an independent sequential reference, and map decoding."""

import math

import numpy as np
import pytest

from forgeloc.boundary import BoundaryMap, gt_boundary_map, valid_cell_mask
from forgeloc.postprocess import (
    SnmsConfig,
    decode,
    read_predictions,
    search_snms,
    soft_nms,
    write_predictions,
)
from forgeloc.types import Segment, VideoAnnotation


def reference_soft_nms(proposals, config):
    """Plain-list reference: same contract, written independently."""
    def iou(a, b):
        inter = min(a[1], b[1]) - max(a[0], b[0])
        if inter <= 0:
            return 0.0
        return inter / ((a[1] - a[0]) + (b[1] - b[0]) - inter)

    items = [[p.start, p.end, p.score] for p in proposals if p.score >= config.score_floor]
    kept = []
    cap = config.top_k if config.top_k is not None else len(items) + 1
    while items and len(kept) < cap:
        best = 0
        for i in range(1, len(items)):
            cand, cur = items[i], items[best]
            if (-cand[2], cand[0], cand[1] - cand[0]) < (-cur[2], cur[0], cur[1] - cur[0]):
                best = i
        chosen = items.pop(best)
        kept.append(chosen)
        nxt = []
        for other in items:
            overlap = iou(chosen, other)
            if config.method == "gaussian":
                factor = math.exp(-(overlap ** 2) / config.sigma)
            else:
                factor = (1.0 - overlap) if overlap > config.iou_cut else 1.0
            score = other[2] * factor
            if score >= config.score_floor:
                nxt.append([other[0], other[1], score])
        items = nxt
    return kept


def random_proposals(rng, n):
    out = []
    for _ in range(n):
        start = float(rng.uniform(0, 20))
        end = start + float(rng.uniform(0.1, 5))
        out.append(Segment(start, end, score=float(rng.uniform(0, 1))))
    return out


class TestSoftNms:
    def test_single_proposal_unchanged(self):
        seg = Segment(1.0, 2.0, 0.7)
        assert soft_nms([seg], SnmsConfig(score_floor=0.0)) == [seg]

    def test_disjoint_proposals_keep_scores(self):
        segs = [Segment(0.0, 1.0, 0.9), Segment(5.0, 6.0, 0.8)]
        assert soft_nms(segs, SnmsConfig(score_floor=0.0)) == segs

    def test_gaussian_decay_hand_value(self):
        # [0,2) vs [1,2): intersection 1, union 2 -> IoU exactly 0.5
        segs = [Segment(0.0, 2.0, 0.9), Segment(1.0, 2.0, 0.8)]
        out = soft_nms(segs, SnmsConfig(sigma=0.5, score_floor=0.0))
        assert out[0].score == 0.9
        assert out[1].score == pytest.approx(0.8 * math.exp(-0.5), abs=1e-12)

    def test_linear_decay(self):
        segs = [Segment(0.0, 2.0, 0.9), Segment(1.0, 2.0, 0.8)]
        out = soft_nms(segs, SnmsConfig(method="linear", iou_cut=0.3, score_floor=0.0))
        assert out[1].score == pytest.approx(0.8 * 0.5, abs=1e-12)
        # cut above the overlap: no decay
        out = soft_nms(segs, SnmsConfig(method="linear", iou_cut=0.6, score_floor=0.0))
        assert out[1].score == 0.8

    @pytest.mark.parametrize("method", ["gaussian", "linear"])
    def test_matches_reference_on_random_inputs(self, method):
        rng = np.random.default_rng(51)
        for trial in range(25):
            n = int(rng.integers(1, 201))
            proposals = random_proposals(rng, n)
            config = SnmsConfig(
                method=method,
                sigma=float(rng.uniform(0.1, 1.0)),
                iou_cut=float(rng.uniform(0.0, 0.8)),
                score_floor=float(rng.choice([0.0, 0.05, 0.2])),
                top_k=int(rng.choice([5, 50, 1000])),
            )
            got = soft_nms(proposals, config)
            want = reference_soft_nms(proposals, config)
            assert len(got) == len(want)
            for g, w in zip(got, want):
                assert (g.start, g.end) == (w[0], w[1])
                assert g.score == pytest.approx(w[2], abs=1e-12)

    def test_identity_configuration(self):
        rng = np.random.default_rng(52)
        proposals = random_proposals(rng, 40)
        out = soft_nms(proposals, SnmsConfig(method="linear", iou_cut=1.0,
                                             score_floor=0.0, top_k=None))
        assert sorted(out, key=lambda s: -s.score) == out
        assert set(out) == set(proposals)

    def test_argmax_always_survives_and_scores_never_grow(self):
        rng = np.random.default_rng(53)
        proposals = random_proposals(rng, 60)
        best = max(proposals, key=lambda s: s.score)
        out = soft_nms(proposals, SnmsConfig(score_floor=0.0))
        assert out[0] == best
        originals = {(s.start, s.end): s.score for s in proposals}
        assert all(s.score <= originals[(s.start, s.end)] + 1e-15 for s in out)

    def test_top_k_and_sorting(self):
        rng = np.random.default_rng(54)
        proposals = random_proposals(rng, 30)
        out = soft_nms(proposals, SnmsConfig(top_k=7, score_floor=0.0))
        assert len(out) <= 7
        assert all(a.score >= b.score for a, b in zip(out, out[1:]))

    def test_empty_input(self):
        assert soft_nms([], SnmsConfig()) == []


class TestDecode:
    def test_zero_map_decodes_empty(self):
        assert decode(BoundaryMap.zeros(4, 8), fps=1.0) == []

    def test_dominant_cell_suppresses_duplicates(self):
        values = np.zeros((4, 12))
        values[2, 4] = 0.95  # [4, 7)
        values[2, 5] = 0.80  # shifted duplicate [5, 8), IoU 0.5
        values[3, 4] = 0.75  # longer duplicate [4, 8), IoU 0.75
        bmap = BoundaryMap(values * valid_cell_mask(4, 12))
        out = decode(bmap, fps=1.0, config=SnmsConfig(sigma=0.1, score_floor=0.0))
        above = [s for s in out if s.score > 0.5]
        assert above == [Segment(4.0, 7.0, 0.95)]

    def test_gt_map_top1_recovers_grid_aligned_segment(self):
        ann = VideoAnnotation(
            "v", 8.0, 2.0, 16, 1, 0, (Segment(1.5, 3.0),)
        )
        bmap = gt_boundary_map(ann, 16, 8)
        out = decode(bmap, fps=2.0)
        assert (out[0].start, out[0].end, out[0].score) == (1.5, 3.0, 1.0)


class TestPredictionFile:
    def test_roundtrip(self, tmp_path):
        preds = {
            "a": [Segment(0.0, 1.0, 0.5), Segment(2.0, 3.5, 0.25)],
            "b": [Segment(1.0, 4.0, 0.875)],
        }
        path = tmp_path / "preds.jsonl"
        write_predictions(path, preds)
        assert read_predictions(path) == preds

    def test_bad_record_reports_line(self, tmp_path):
        path = tmp_path / "preds.jsonl"
        path.write_text('{"video_id": "a", "start": 0.0}\n')
        with pytest.raises(ValueError, match=":1:"):
            read_predictions(path)


class TestSearchSnms:
    def test_returns_sorted_configurations(self):
        ann = VideoAnnotation("v", 8.0, 1.0, 8, 1, 0, (Segment(2.0, 4.0),))
        bmap = gt_boundary_map(ann, 8, 4)
        results = search_snms({"v": (bmap, 1.0)}, [ann], sigmas=(0.1, 0.5),
                              score_floors=(0.01, 0.2))
        aps = [ap for _, ap in results]
        assert aps == sorted(aps, reverse=True)
        assert aps[0] == 1.0  # ground-truth maps decode perfectly at the top
