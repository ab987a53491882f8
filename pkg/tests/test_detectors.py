import numpy as np
import pytest

from hitsync.audio_features import AudioBuffer
from hitsync.detectors import (
    DEFAULT_FLUX_THRESHOLD,
    Decision,
    DetectionStream,
    DetectorQuality,
    StreamKind,
    bernoulli_stream,
    dsp_aed,
    load_scores,
    oracle_detector,
    video_block_detector,
    write_scores,
)
from hitsync.errors import ConfigError, FormatError
from hitsync.synth import BackgroundSpec, SynthSpec, generate
from hitsync.timeline import label_track_from, EventLabel


class TestLoadScores:
    def test_basic_thresholding(self, tmp_path):
        path = tmp_path / "s.csv"
        path.write_text("index,score\n0,0.9\n1,0.2\n")
        stream = load_scores(path, 0.5)
        assert stream.hit_indices() == [0]
        assert stream.is_hit(0) and not stream.is_hit(1)
        assert stream.score(0) == pytest.approx(0.9)

    def test_empty_file_is_valid(self, tmp_path):
        path = tmp_path / "empty.csv"
        path.write_text("")
        stream = load_scores(path, 0.5)
        assert len(stream) == 0 and stream.hit_indices() == []

    def test_header_only_is_valid(self, tmp_path):
        path = tmp_path / "h.csv"
        path.write_text("index,score\n")
        assert load_scores(path, 0.5).hit_indices() == []

    def test_zero_threshold_hits_everything(self, tmp_path):
        path = tmp_path / "s.csv"
        path.write_text("index,score\n3,0.0\n7,1.0\n")
        assert load_scores(path, 0.0).hit_indices() == [3, 7]

    def test_malformed_row_names_line(self, tmp_path):
        path = tmp_path / "bad.csv"
        path.write_text("index,score\n0,0.5\nx,0.1\n")
        with pytest.raises(FormatError, match="line 3"):
            load_scores(path, 0.5)

    def test_duplicate_index_names_line(self, tmp_path):
        path = tmp_path / "dup.csv"
        path.write_text("index,score\n4,0.5\n4,0.6\n")
        with pytest.raises(FormatError, match="line 3"):
            load_scores(path, 0.5)

    def test_score_out_of_range_rejected(self, tmp_path):
        path = tmp_path / "oob.csv"
        path.write_text("index,score\n0,1.5\n")
        with pytest.raises(FormatError):
            load_scores(path, 0.5)

    def test_missing_header_rejected(self, tmp_path):
        path = tmp_path / "nh.csv"
        path.write_text("0,0.5\n")
        with pytest.raises(FormatError, match="line 1"):
            load_scores(path, 0.5)

    def test_roundtrip_via_write_scores(self, tmp_path):
        stream = DetectionStream(
            kind=StreamKind.AUDIO_SEGMENT,
            decisions={5: Decision(0.75, True), 2: Decision(0.25, False)},
        )
        path = tmp_path / "rt.csv"
        write_scores(path, stream)
        back = load_scores(path, 0.5)
        assert back.hit_indices() == [5]
        assert back.score(2) == pytest.approx(0.25)


class TestDspAed:
    def test_stationary_tone_no_hits_at_any_threshold(self, grid):
        # frame-periodic tone: consecutive frame spectra are bit-identical,
        # so the flux is exactly zero and no threshold > 0 can fire
        one_frame = 0.5 * np.sin(2 * np.pi * 450.0 * np.arange(1920) / 48000.0)
        buf = AudioBuffer(np.tile(one_frame, 250))
        stream = dsp_aed(buf, grid, threshold=1e-300)
        assert stream.hit_indices() == []

    def test_sampled_tone_no_hits_at_default_threshold(self, grid):
        # a continuously sampled tone accumulates last-bit phase error across
        # frames; flux stays ~1e-10-scale, ten orders under the threshold
        t = np.arange(10 * 48000)
        buf = AudioBuffer(0.5 * np.sin(2 * np.pi * 440.0 * t / 48000.0))
        assert dsp_aed(buf, grid).hit_indices() == []

    def test_silence_no_hits(self, grid):
        stream = dsp_aed(AudioBuffer(np.zeros(48000)), grid, threshold=1e-12)
        assert stream.hit_indices() == []

    def test_single_transient_detected_at_its_frame(self, grid):
        spec = SynthSpec(
            duration_s=8.0,
            hit_frames=(77,),
            background=BackgroundSpec(noise_level=0.05),  # 20 dB
            seed=1,
        )
        buf, _, _ = generate(spec)
        assert dsp_aed(buf, grid).hit_indices() == [77]

    def test_rally_corpus_exact_detection(self, grid, rally_20db):
        # calibration contract: TPR=1, FPR=0 at the default threshold, 20 dB,
        # bounces present as hard negatives
        spec, buf, _, _ = rally_20db
        assert dsp_aed(buf, grid).hit_indices() == sorted(spec.hit_frames)

    def test_gain_invariance(self, grid, rally_20db):
        _, buf, _, _ = rally_20db
        base = dsp_aed(buf, grid).hit_indices()
        for alpha in (0.1, 10.0):
            scaled = dsp_aed(AudioBuffer(alpha * buf.samples), grid).hit_indices()
            assert scaled == base

    def test_buffer_too_short_rejected(self, grid):
        with pytest.raises(ValueError):
            dsp_aed(AudioBuffer(np.zeros(1000)), grid)

    def test_scores_in_unit_interval(self, grid, rally_20db):
        _, buf, _, _ = rally_20db
        stream = dsp_aed(buf, grid)
        scores = [d.score for d in stream.decisions.values()]
        assert min(scores) >= 0.0 and max(scores) < 1.0


class TestOracleDetector:
    def test_perfect_detector(self):
        track = label_track_from(200, hits=[10, 50, 90])
        stream = oracle_detector(track, EventLabel.HIT, DetectorQuality(1.0, 0.0, seed=3))
        assert stream.hit_indices() == [10, 50, 90]

    def test_dead_detector(self):
        track = label_track_from(200, hits=[10])
        stream = oracle_detector(track, EventLabel.HIT, DetectorQuality(0.0, 0.0, seed=3))
        assert stream.hit_indices() == []

    def test_reproducible_bit_for_bit(self):
        track = label_track_from(500, hits=list(range(0, 500, 50)))
        q = DetectorQuality(0.7, 0.01, seed=42)
        a = oracle_detector(track, EventLabel.HIT, q)
        b = oracle_detector(track, EventLabel.HIT, q)
        assert a.decisions == b.decisions

    def test_monotone_in_tpr_with_common_randomness(self):
        track = label_track_from(2000, hits=list(range(0, 2000, 10)))
        lo = oracle_detector(track, EventLabel.HIT, DetectorQuality(0.3, 0.0, seed=7))
        hi = oracle_detector(track, EventLabel.HIT, DetectorQuality(0.8, 0.0, seed=7))
        assert set(lo.hit_indices()) <= set(hi.hit_indices())

    def test_monotone_in_fpr_with_common_randomness(self):
        track = label_track_from(2000)
        lo = oracle_detector(track, EventLabel.HIT, DetectorQuality(0.0, 0.001, seed=7))
        hi = oracle_detector(track, EventLabel.HIT, DetectorQuality(0.0, 0.01, seed=7))
        assert set(lo.hit_indices()) <= set(hi.hit_indices())

    def test_operating_point_counts(self):
        # tpr/fpr at the adjusted audio-detector operating point: 470 true
        # events in a 100,832-index universe should yield ~342 TP and ~37 FP
        universe = 100_832
        positives = 470
        tpr, fpr = 0.728, 37 / (universe - positives)
        hits = list(range(0, positives * 100, 100))
        track = label_track_from(universe, hits=hits)
        trials = 20
        tps, fps = [], []
        for seed in range(trials):
            stream = oracle_detector(track, EventLabel.HIT, DetectorQuality(tpr, fpr, seed))
            got = set(stream.hit_indices())
            tps.append(len(got & set(hits)))
            fps.append(len(got - set(hits)))
        tp_mean, fp_mean = np.mean(tps), np.mean(fps)
        tp_sigma = np.sqrt(positives * tpr * (1 - tpr) / trials)
        fp_sigma = np.sqrt((universe - positives) * fpr * (1 - fpr) / trials)
        assert abs(tp_mean - positives * tpr) <= 3 * tp_sigma
        assert abs(fp_mean - 37) <= 3 * fp_sigma

    def test_video_kind_universe_excludes_tail(self):
        track = label_track_from(10, hits=[9])
        stream = oracle_detector(
            track, EventLabel.HIT, DetectorQuality(1.0, 0.0, seed=0), StreamKind.VIDEO_BLOCK
        )
        # frame 9 cannot start a full 3-frame block in a 10-frame track
        assert stream.hit_indices() == []

    def test_quality_validation(self):
        with pytest.raises(ConfigError):
            DetectorQuality(1.2, 0.0)

    def test_bernoulli_rejects_out_of_universe_truth(self):
        with pytest.raises(ValueError):
            bernoulli_stream([5], 3, DetectorQuality(1.0, 0.0), StreamKind.AUDIO_SEGMENT)


class TestVideoBlockDetector:
    def test_present_hit(self):
        stream = DetectionStream.from_hits([94], StreamKind.VIDEO_BLOCK)
        assert video_block_detector(stream, 94) is True

    def test_absent_index_is_not_a_hit(self):
        stream = DetectionStream(kind=StreamKind.VIDEO_BLOCK, decisions={})
        assert video_block_detector(stream, 94) is False

    def test_present_miss(self):
        stream = DetectionStream(
            kind=StreamKind.VIDEO_BLOCK, decisions={97: Decision(0.1, False)}
        )
        assert video_block_detector(stream, 97) is False

    def test_wrong_kind_rejected(self):
        stream = DetectionStream(kind=StreamKind.AUDIO_SEGMENT, decisions={})
        with pytest.raises(ValueError):
            video_block_detector(stream, 0)
