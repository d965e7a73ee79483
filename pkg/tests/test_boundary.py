"""Boundary maps against a brute-force per-cell IoU oracle."""

import numpy as np
import pytest

from forgeloc.boundary import (
    BoundaryMap,
    extract_proposals,
    gt_boundary_map,
    load_boundary_map,
    modality_gt_map,
    save_boundary_map,
    valid_cell_mask,
)
from forgeloc.types import Segment, VideoAnnotation


def ann(duration, fps, segs, eta_v=1, eta_a=0, video_id="v0"):
    return VideoAnnotation(
        video_id=video_id,
        duration=duration,
        fps=fps,
        n_frames=round(duration * fps),
        eta_v=eta_v if segs else 0,
        eta_a=eta_a if segs else 0,
        fake_segments=tuple(Segment(s, e) for s, e in segs),
    )


def oracle_map(a: VideoAnnotation, frames: int, max_duration: int) -> np.ndarray:
    """Independent per-cell computation: plain interval IoU in frame units."""
    out = np.zeros((max_duration, frames))
    for d in range(max_duration):
        for t in range(frames):
            if t + d + 1 > frames:
                continue
            lo, hi = float(t), float(t + d + 1)
            best = 0.0
            for seg in a.fake_segments:
                s, e = seg.start * a.fps, seg.end * a.fps
                inter = min(hi, e) - max(lo, s)
                if inter > 0:
                    union = (hi - lo) + (e - s) - inter
                    best = max(best, inter / union)
            out[d, t] = best
    return out


def random_ann(rng, frames, fps):
    duration = frames / fps
    n_seg = int(rng.integers(0, 4))
    segs, cursor = [], 0.0
    for _ in range(n_seg):
        start = float(rng.uniform(cursor, duration - 0.01))
        end = float(rng.uniform(start, duration) + 1e-3)
        end = min(end, duration)
        if end <= start:
            continue
        segs.append((start, end))
        cursor = end
        if cursor >= duration - 0.02:
            break
    return ann(duration, fps, segs)


class TestGtBoundaryMap:
    def test_real_video_all_zero(self):
        bmap = gt_boundary_map(ann(4.0, 1.0, []), frames=4, max_duration=2)
        assert not bmap.values.any()

    def test_hand_example(self):
        bmap = gt_boundary_map(ann(4.0, 1.0, [(1.0, 3.0)]), frames=4, max_duration=2)
        assert bmap.values[1, 1] == 1.0
        assert bmap.values[0, 1] == 0.5

    def test_two_segments_take_max(self):
        a = ann(8.0, 1.0, [(0.0, 2.0), (5.0, 7.0)])
        bmap = gt_boundary_map(a, frames=8, max_duration=4)
        np.testing.assert_allclose(bmap.values, oracle_map(a, 8, 4), atol=0)

    def test_matches_oracle_on_random_annotations(self):
        rng = np.random.default_rng(21)
        for _ in range(40):
            frames = int(rng.integers(2, 33))
            fps = float(rng.uniform(0.5, 8.0))
            a = random_ann(rng, frames, fps)
            d = int(rng.integers(1, 17))
            got = gt_boundary_map(a, frames, d).values
            np.testing.assert_allclose(got, oracle_map(a, frames, d), atol=1e-12)

    def test_grid_aligned_segment_attains_one_exactly_once(self):
        # power-of-two fps keeps frame/second conversion exact, so the
        # segment really does sit on the frame grid
        rng = np.random.default_rng(22)
        for _ in range(30):
            frames = int(rng.integers(4, 33))
            fps = float(rng.choice([0.5, 1.0, 2.0, 4.0, 8.0]))
            d_max = int(rng.integers(2, 17))
            length = int(rng.integers(1, min(d_max, frames) + 1))
            start = int(rng.integers(0, frames - length + 1))
            a = ann(frames / fps, fps, [(start / fps, (start + length) / fps)])
            values = gt_boundary_map(a, frames, d_max).values
            assert np.count_nonzero(values == 1.0) == 1
            assert values[length - 1, start] == 1.0


class TestModalityGtMap:
    def test_unmodified_modality_zero(self):
        a = ann(4.0, 1.0, [(1.0, 3.0)], eta_v=1, eta_a=0)
        assert not modality_gt_map(a, "audio", 4, 2).values.any()

    def test_modified_modality_equals_gt(self):
        a = ann(4.0, 1.0, [(1.0, 3.0)], eta_v=1, eta_a=0)
        np.testing.assert_array_equal(
            modality_gt_map(a, "video", 4, 2).values, gt_boundary_map(a, 4, 2).values
        )

    def test_both_modified_equals_fusion_target(self):
        a = ann(4.0, 1.0, [(1.0, 3.0)], eta_v=1, eta_a=1)
        gt = gt_boundary_map(a, 4, 2).values
        np.testing.assert_array_equal(modality_gt_map(a, "video", 4, 2).values, gt)
        np.testing.assert_array_equal(modality_gt_map(a, "audio", 4, 2).values, gt)


class TestExtractProposals:
    def test_zero_map_empty(self):
        assert extract_proposals(BoundaryMap.zeros(3, 6), fps=1.0, score_floor=0.1) == []

    def test_single_cell_index_arithmetic(self):
        values = np.zeros((3, 6))
        values[1, 2] = 0.9
        props = extract_proposals(BoundaryMap(values), fps=1.0, score_floor=0.5)
        assert props == [Segment(2.0, 4.0, score=0.9)]

    def test_floor_zero_yields_every_valid_cell(self):
        rng = np.random.default_rng(23)
        values = rng.uniform(0.1, 1.0, size=(4, 7)) * valid_cell_mask(4, 7)
        props = extract_proposals(BoundaryMap(values), fps=2.0, score_floor=0.0)
        assert len(props) == int(valid_cell_mask(4, 7).sum())
        scores = [p.score for p in props]
        assert scores == sorted(scores, reverse=True)

    def test_floor_one_recovers_grid_aligned_segments(self):
        a = ann(8.0, 2.0, [(0.5, 1.5), (3.0, 3.5)])
        bmap = gt_boundary_map(a, 16, 8)
        props = extract_proposals(bmap, fps=2.0, score_floor=1.0)
        assert {(p.start, p.end) for p in props} == {(0.5, 1.5), (3.0, 3.5)}


class TestBoundaryMapType:
    def test_rejects_nonzero_invalid_cells(self):
        values = np.zeros((2, 3))
        values[1, 2] = 0.5  # needs frames 2..4, only 3 exist
        with pytest.raises(ValueError):
            BoundaryMap(values)

    def test_rejects_out_of_range_values(self):
        values = np.zeros((2, 3))
        values[0, 0] = 1.5
        with pytest.raises(ValueError):
            BoundaryMap(values)

    def test_roundtrip_serialization(self, tmp_path):
        a = ann(6.0, 2.0, [(1.0, 2.5)])
        bmap = gt_boundary_map(a, 12, 5)
        path = tmp_path / "map.json"
        save_boundary_map(path, bmap, fps=2.0)
        loaded, fps = load_boundary_map(path)
        assert fps == 2.0
        np.testing.assert_array_equal(loaded.values, bmap.values)
