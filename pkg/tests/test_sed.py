import logging

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from gmmscene import sed
from gmmscene.errors import ConfigError, InputError, ParseError, ValidationError
from gmmscene.features import AudioClip, get_profile
from gmmscene.sed import GENERIC, EventAnnotation, PerturbConfig, SegmentPrediction


def _clip(seconds, sr=44100, seed=0):
    return AudioClip(np.random.default_rng(seed).standard_normal(int(round(seconds * sr))) * 0.1,
                     sr, "rec")


class TestAnnotations:
    def test_parse_line(self):
        (ev,) = sed.parse_annotations("1.00\t2.50\tbird singing\n")
        assert ev == EventAnnotation(1.0, 2.5, "bird singing")

    def test_empty(self):
        assert sed.parse_annotations("") == []
        assert sed.parse_annotations("\n\n") == []

    def test_reversed_interval(self):
        with pytest.raises(ValidationError):
            sed.parse_annotations("2.0\t1.0\tx\n")

    def test_malformed_line_reports_line_number(self):
        with pytest.raises(ParseError) as err:
            sed.parse_annotations("0.5\t1.0\ta\n0.5 1.0 b\n")
        assert err.value.line == 2

    def test_non_numeric(self):
        with pytest.raises(ParseError):
            sed.parse_annotations("soon\t1.0\ta\n")

    def test_format_roundtrip(self):
        evs = [EventAnnotation(0.0, 1.25, "door"), EventAnnotation(3.5, 7.0, "car passing")]
        assert sed.parse_annotations(sed.format_annotations(evs)) == evs


class TestCarving:
    def test_one_second_event(self):
        ((label, piece),) = sed.carve_events(_clip(3), [EventAnnotation(1.0, 2.0, "x")])
        assert label == "x"
        assert len(piece.samples) == 44100

    def test_offset_clamped(self, caplog):
        clip = _clip(3)
        with caplog.at_level(logging.WARNING):
            ((_, piece),) = sed.carve_events(clip, [EventAnnotation(2.0, 5.0, "x")])
        assert len(piece.samples) == 44100
        assert "clamped" in caplog.text

    def test_outside_skipped(self, caplog):
        with caplog.at_level(logging.WARNING):
            assert sed.carve_events(_clip(3), [EventAnnotation(4.0, 5.0, "x")]) == []
        assert "outside" in caplog.text


class TestGaps:
    def test_single_event(self):
        assert sed.gap_intervals([EventAnnotation(2, 3, "a")], 10.0) == [(0.0, 2), (3, 10.0)]

    def test_full_coverage(self):
        assert sed.gap_intervals([EventAnnotation(0, 10, "a")], 10.0) == []

    def test_overlaps_merged(self):
        anns = [EventAnnotation(1, 4, "a"), EventAnnotation(3, 6, "b"), EventAnnotation(6, 7, "c")]
        assert sed.merge_intervals(anns) == [(1, 7)]

    def test_min_gap(self):
        anns = [EventAnnotation(0.5, 3, "a")]
        assert sed.gap_intervals(anns, 10.0, min_gap=1.0) == [(3, 10.0)]

    @settings(max_examples=60, deadline=None)
    @given(st.lists(st.tuples(st.floats(0, 9), st.floats(0.01, 3)), max_size=6))
    def test_gaps_disjoint_from_events(self, spans):
        anns = [EventAnnotation(a, min(a + b, 10.0), "e") for a, b in spans]
        gaps = sed.gap_intervals(anns, 10.0)
        covered = sum(b - a for a, b in sed.merge_intervals(anns))
        assert sum(b - a for a, b in gaps) == pytest.approx(10.0 - covered)
        for ga, gb in gaps:
            for e in anns:
                assert gb <= e.onset or ga >= e.offset

    def test_generic_default_count(self):
        recs = [(_clip(10, 16000, seed=k), [EventAnnotation(4.0, 5.0, "a")]) for k in range(40)]
        picked = sed.build_generic_class(recs)
        assert len(picked) == 60
        again = sed.build_generic_class(recs)
        assert all(np.array_equal(a.samples, b.samples) for a, b in zip(picked, again))

    def test_generic_fewer_candidates(self):
        recs = [(_clip(10, 16000), [EventAnnotation(4.0, 5.0, "a")])]
        assert len(sed.build_generic_class(recs)) == 2


class TestSpeed:
    def test_identity(self):
        clip = _clip(1)
        assert np.array_equal(sed.speed_change(clip, 1.0).samples, clip.samples)

    def test_double_speed_halves(self):
        assert len(sed.speed_change(_clip(1), 2.0).samples) == 22050

    def test_half_speed_keeps_samples(self):
        clip = _clip(0.1)
        slow = sed.speed_change(clip, 0.5)
        np.testing.assert_array_equal(slow.samples[::2], clip.samples)

    def test_default_fourteen(self):
        out = sed.time_perturb(_clip(0.5))
        assert len(out) == 14
        assert sum(len(c.samples) == 22050 for c in out) == 1

    def test_bounds(self):
        for bad in ((0.4,), (1.4,), (1.0,), (0.0,), (-1.0,)):
            with pytest.raises(ConfigError):
                PerturbConfig(bad)
        assert PerturbConfig((0.5, 1.3)).speeds == (0.5, 1.3)

    def test_nonpositive_factor(self):
        with pytest.raises(ConfigError):
            sed.speed_change(_clip(0.1), 0.0)


class TestSegmentation:
    @pytest.mark.parametrize("seconds,count,last", [(10.0, 10, 1.0), (10.6, 11, 0.6), (10.2, 10, 1.2)])
    def test_final_segment_rule(self, seconds, count, last):
        segs = sed.segment_scene(_clip(seconds, 16000))
        assert len(segs) == count
        assert segs[-1].end - segs[-1].start == pytest.approx(last)
        assert segs[-1].stop_sample == int(round(seconds * 16000))

    def test_shorter_than_segment(self):
        (seg,) = sed.segment_scene(_clip(0.3, 16000))
        assert (seg.start, seg.end) == (0.0, 0.3)

    def test_empty(self):
        with pytest.raises(InputError):
            sed.segment_scene(AudioClip(np.zeros(0), 16000))


def _preds(labels):
    return [SegmentPrediction(k, float(k), k + 1.0, lab) for k, lab in enumerate(labels)]


class TestDetections:
    def test_runs_merge(self):
        evs = sed.detections_to_events(_preds(["a", "a", GENERIC, "b", "b", "b"]))
        assert evs == [EventAnnotation(0, 2, "a"), EventAnnotation(3, 6, "b")]

    def test_generic_only_is_empty(self):
        assert sed.write_detections(_preds([GENERIC] * 5)) == ""

    def test_alternating_not_merged(self):
        assert len(sed.detections_to_events(_preds(["a", "b", "a", "b"]))) == 4

    def test_generic_breaks_run(self):
        evs = sed.detections_to_events(_preds(["a", GENERIC, "a"]))
        assert evs == [EventAnnotation(0, 1, "a"), EventAnnotation(2, 3, "a")]

    def test_detect_uses_model(self):
        class Constant:
            def predict(self, X):
                assert X.shape[1] == 39
                return ["hum"] * len(X)

        clip = _clip(3.2, 16000)
        out = sed.detect(Constant(), clip, sed.segment_scene(clip), get_profile("task3"))
        assert [p.label for p in out] == ["hum"] * 3
        assert sed.write_detections(out) == "0.00\t3.20\thum\n"
