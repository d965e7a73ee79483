"""Core domain types: interval IoU, frame labels, manifest I/O."""

import numpy as np
import pytest

from forgeloc.types import (
    FeatureSequence,
    FrameLabelSequence,
    Segment,
    VideoAnnotation,
    VideoMeta,
    frame_labels,
    iou_1d,
    modality_labels,
    read_manifest,
    write_manifest,
)


def ann(video_id="v0", duration=4.0, fps=1.0, eta_v=0, eta_a=0, segs=(), split=None):
    return VideoAnnotation(
        video_id=video_id,
        duration=duration,
        fps=fps,
        n_frames=round(duration * fps),
        eta_v=eta_v,
        eta_a=eta_a,
        fake_segments=tuple(Segment(s, e) for s, e in segs),
        split=split,
    )


class TestIou1d:
    def test_identity(self):
        assert iou_1d(Segment(0, 1), Segment(0, 1)) == 1.0

    def test_disjoint(self):
        assert iou_1d(Segment(0, 1), Segment(2, 3)) == 0.0

    def test_partial_overlap(self):
        # intersection 1, union 3
        assert iou_1d(Segment(0, 2), Segment(1, 3)) == pytest.approx(1 / 3, abs=1e-15)

    def test_symmetry_and_range(self):
        rng = np.random.default_rng(11)
        for _ in range(300):
            a = sorted(rng.uniform(0, 10, size=2))
            b = sorted(rng.uniform(0, 10, size=2))
            if a[0] == a[1] or b[0] == b[1]:
                continue
            sa, sb = Segment(*a), Segment(*b)
            iou = iou_1d(sa, sb)
            assert iou == iou_1d(sb, sa)
            assert 0.0 <= iou <= 1.0
            assert (iou == 1.0) == (a == b)

    def test_translation_and_scale_invariance(self):
        rng = np.random.default_rng(12)
        for _ in range(100):
            a = np.sort(rng.uniform(0, 10, size=2))
            b = np.sort(rng.uniform(0, 10, size=2))
            if a[0] == a[1] or b[0] == b[1]:
                continue
            shift = rng.uniform(0, 5)
            scale = rng.uniform(0.1, 4)
            base = iou_1d(Segment(*a), Segment(*b))
            shifted = iou_1d(Segment(*(a + shift)), Segment(*(b + shift)))
            scaled = iou_1d(Segment(*(a * scale)), Segment(*(b * scale)))
            assert shifted == pytest.approx(base, abs=1e-12)
            assert scaled == pytest.approx(base, abs=1e-12)


class TestFrameLabels:
    def test_real_video_is_zero(self):
        labels = frame_labels(ann(duration=4.0, fps=1.0))
        assert labels.labels.tolist() == [0, 0, 0, 0]

    def test_unit_fps_segment(self):
        labels = frame_labels(ann(eta_v=1, segs=[(1.0, 3.0)]))
        assert labels.labels.tolist() == [0, 1, 1, 0]

    def test_half_frame_rule(self):
        # frame period 0.5 s; [0.0, 0.5) covers frame 0 fully, frame 1 not at all
        labels = frame_labels(ann(duration=2.0, fps=2.0, eta_a=1, segs=[(0.0, 0.5)]))
        assert labels.labels.tolist() == [1, 0, 0, 0]

    def test_exact_half_overlap_stays_real(self):
        # 0.25 s overlap of a 0.5 s frame is not *more* than half
        labels = frame_labels(ann(duration=2.0, fps=2.0, eta_v=1, segs=[(0.25, 0.5)]))
        assert labels.labels.tolist() == [0, 0, 0, 0]

    def test_label_mass_tracks_duration(self):
        rng = np.random.default_rng(13)
        for _ in range(50):
            fps = float(rng.uniform(1, 10))
            t = int(rng.integers(8, 40))
            duration = t / fps
            start = float(rng.uniform(0, duration * 0.5))
            end = float(rng.uniform(start + 0.5 / fps, duration))
            a = ann(duration=duration, fps=fps, eta_v=1, segs=[(start, end)])
            total = frame_labels(a).labels.sum()
            assert abs(total - (end - start) * fps) <= 1.0


class TestModalityLabels:
    def test_unmodified_modality_is_zero(self):
        a = ann(eta_v=1, segs=[(1.0, 2.0)])
        assert modality_labels(a, "audio").labels.tolist() == [0, 0, 0, 0]

    def test_modified_modality_passes_through(self):
        a = ann(eta_v=1, segs=[(1.0, 2.0)])
        assert modality_labels(a, "video").labels.tolist() == frame_labels(a).labels.tolist()

    def test_real_video_both_zero(self):
        a = ann()
        assert modality_labels(a, "video").labels.sum() == 0
        assert modality_labels(a, "audio").labels.sum() == 0

    def test_unknown_modality_rejected(self):
        with pytest.raises(ValueError):
            modality_labels(ann(), "text")


class TestValidation:
    def test_segment_rejects_bad_intervals(self):
        with pytest.raises(ValueError):
            Segment(2.0, 1.0)
        with pytest.raises(ValueError):
            Segment(-1.0, 1.0)
        with pytest.raises(ValueError):
            Segment(0.0, 1.0, score=1.5)

    def test_annotation_rejects_inconsistent_frames(self):
        with pytest.raises(ValueError):
            VideoAnnotation("x", 4.0, 1.0, 7, 0, 0)

    def test_annotation_rejects_segments_on_real_video(self):
        with pytest.raises(ValueError):
            ann(segs=[(0.0, 1.0)])

    def test_annotation_rejects_overlapping_segments(self):
        with pytest.raises(ValueError):
            ann(eta_v=1, segs=[(0.0, 2.0), (1.5, 3.0)])

    def test_annotation_rejects_out_of_range_segment(self):
        with pytest.raises(ValueError):
            ann(eta_v=1, segs=[(3.0, 5.0)])

    def test_feature_sequence_immutable_and_finite(self):
        feats = FeatureSequence(np.ones((2, 3)))
        assert feats.channels == 2 and feats.frames == 3
        with pytest.raises(ValueError):
            feats.data[0, 0] = 2.0
        with pytest.raises(ValueError):
            FeatureSequence(np.array([[np.nan, 1.0]]))

    def test_frame_label_sequence_range(self):
        seq = FrameLabelSequence(np.array([0.0, 0.5, 1.0]))
        assert seq.frames == 3 and not seq.is_binary
        assert FrameLabelSequence(np.array([0.0, 1.0])).is_binary
        with pytest.raises(ValueError):
            FrameLabelSequence(np.array([1.5]))

    def test_video_meta_positivity(self):
        VideoMeta(224, 224, 3, 128, 64)
        with pytest.raises(ValueError):
            VideoMeta(224, 224, 0, 128, 64)


class TestManifest:
    def test_roundtrip(self, tmp_path):
        anns = [
            ann("a", split="train"),
            ann("b", duration=3.0, fps=2.0, eta_v=1, eta_a=1, segs=[(0.5, 1.0), (2.0, 2.5)]),
            ann("c", duration=8.0, fps=0.5, eta_a=1, segs=[(1.0, 2.6)]),
        ]
        path = tmp_path / "manifest.jsonl"
        write_manifest(path, anns)
        loaded = read_manifest(path)
        assert loaded == anns

    def test_field_names_exact(self, tmp_path):
        path = tmp_path / "manifest.jsonl"
        write_manifest(path, [ann("a", eta_v=1, segs=[(1.0, 2.0)])])
        import json

        rec = json.loads(path.read_text().strip())
        assert set(rec) == {
            "video_id", "duration", "fps", "n_frames", "eta_v", "eta_a", "fake_segments",
        }
        assert rec["fake_segments"] == [{"start": 1.0, "end": 2.0}]

    def test_duplicate_ids_rejected(self, tmp_path):
        path = tmp_path / "manifest.jsonl"
        write_manifest(path, [ann("a"), ann("a")])
        with pytest.raises(ValueError):
            read_manifest(path)

    def test_bad_record_reports_line(self, tmp_path):
        path = tmp_path / "manifest.jsonl"
        path.write_text('{"video_id": "x"}\n')
        with pytest.raises(ValueError, match=":1:"):
            read_manifest(path)
