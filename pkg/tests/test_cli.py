import json

import numpy as np
import pytest

from hitsync.audio_io import read_feature_dump
from hitsync.cli import main
from hitsync.synth import BackgroundSpec, SynthSpec, write_corpus


@pytest.fixture()
def corpus(tmp_path):
    """A small 20 dB corpus: hits spaced for unambiguous injection sweeps."""
    spec = SynthSpec(
        duration_s=24.0,
        hit_frames=(50, 100, 150, 200, 250, 300, 350, 400, 450, 500),
        bounce_frames=(75, 125, 175),
        background=BackgroundSpec(noise_level=0.05),
        seed=13,
    )
    out = tmp_path / "corpus"
    write_corpus(out, spec)
    return spec, out


def write_config(tmp_path, payload):
    path = tmp_path / "config.json"
    path.write_text(json.dumps(payload))
    return str(path)


class TestSynthCommand:
    def test_writes_artifacts(self, tmp_path):
        cfg = write_config(tmp_path, {"synth": {"duration_s": 2.0, "hit_frames": [10], "seed": 4}})
        out = tmp_path / "o"
        assert main(["synth", "--config", cfg, "--out", str(out)]) == 0
        for name in ("audio.wav", "labels.jsonl", "video_truth.csv", "manifest.json"):
            assert (out / name).exists()

    def test_deterministic_bytes(self, tmp_path):
        cfg = write_config(tmp_path, {"synth": {"duration_s": 2.0, "n_hits": 3, "seed": 4}})
        assert main(["synth", "--config", cfg, "--out", str(tmp_path / "a")]) == 0
        assert main(["synth", "--config", cfg, "--out", str(tmp_path / "b")]) == 0
        a = (tmp_path / "a" / "audio.wav").read_bytes()
        b = (tmp_path / "b" / "audio.wav").read_bytes()
        assert a == b

    def test_conflicting_events_exit_2(self, tmp_path, capsys):
        cfg = write_config(
            tmp_path, {"synth": {"duration_s": 2.0, "hit_frames": [10], "bounce_frames": [10]}}
        )
        assert main(["synth", "--config", cfg, "--out", str(tmp_path / "o")]) == 2
        assert "10" in capsys.readouterr().err


class TestExtractCommand:
    def test_record_count_and_labels(self, tmp_path):
        spec = SynthSpec(duration_s=4.0, hit_frames=(30,), seed=2)
        corpus_dir = tmp_path / "c"
        write_corpus(corpus_dir, spec)
        out = tmp_path / "features"
        rc = main([
            "extract",
            "--audio", str(corpus_dir / "audio.wav"),
            "--labels", str(corpus_dir / "labels.jsonl"),
            "--out", str(out),
        ])
        assert rc == 0
        dump = read_feature_dump(out / "features.bin")
        assert dump.shape == (97, 61, 60, 3)  # 100 frames -> 97 segments
        manifest = json.loads((out / "features.json").read_text())
        assert manifest["count"] == 97
        assert manifest["records"][30]["label"] == "hit"
        assert manifest["records"][30]["start_sample"] == 30 * 1920

    def test_wrong_rate_exit_2(self, tmp_path, capsys):
        from scipy.io import wavfile

        bad = tmp_path / "bad.wav"
        wavfile.write(bad, 44100, np.zeros(44100, dtype=np.float32))
        assert main(["extract", "--audio", str(bad), "--out", str(tmp_path / "o")]) == 2
        assert "44100" in capsys.readouterr().err


class TestCheckCommand:
    def test_synchronized_corpus_exit_0(self, tmp_path, corpus):
        spec, corpus_dir = corpus
        out = tmp_path / "run"
        rc = main([
            "check",
            "--audio", str(corpus_dir / "audio.wav"),
            "--labels", str(corpus_dir / "labels.jsonl"),
            "--video-scores", str(corpus_dir / "video_truth.csv"),
            "--out", str(out),
        ])
        assert rc == 0
        lines = [json.loads(l) for l in (out / "verdicts.jsonl").read_text().splitlines()]
        assert lines[-1]["summary"] == {
            "verdicts": len(spec.hit_frames), "flagged": 0, "injected": 0,
        }
        report = json.loads((out / "report.json").read_text())
        assert report["raw"]["fp"] == 0 and report["raw"]["tp"] == 0
        assert report["raw"]["tn"] == len(spec.hit_frames)

    def test_full_injection_exit_1(self, tmp_path, corpus):
        spec, corpus_dir = corpus
        cfg = write_config(tmp_path, {
            "seed": 21,
            "offsets": {"fraction_offset": 1.0},
        })
        out = tmp_path / "run"
        rc = main([
            "check", "--config", cfg, "--inject",
            "--audio", str(corpus_dir / "audio.wav"),
            "--labels", str(corpus_dir / "labels.jsonl"),
            "--video-scores", str(corpus_dir / "video_truth.csv"),
            "--out", str(out),
        ])
        assert rc == 1
        report = json.loads((out / "report.json").read_text())
        assert report["raw"]["tp"] == len(spec.hit_frames)
        assert report["precision"] == 1.0 and report["recall"] == 1.0

    def test_missing_video_source_exit_2(self, tmp_path, corpus):
        _, corpus_dir = corpus
        rc = main([
            "check",
            "--audio", str(corpus_dir / "audio.wav"),
            "--labels", str(corpus_dir / "labels.jsonl"),
            "--out", str(tmp_path / "run"),
        ])
        assert rc == 2

    def test_score_file_inputs(self, tmp_path):
        audio_scores = tmp_path / "a.csv"
        audio_scores.write_text("index,score\n100,0.9\n200,0.8\n")
        video_scores = tmp_path / "v.csv"
        video_scores.write_text("index,score\n100,1.0\n")
        out = tmp_path / "run"
        rc = main([
            "check",
            "--audio-scores", str(audio_scores),
            "--video-scores", str(video_scores),
            "--out", str(out),
        ])
        assert rc == 1  # detection at 200 finds nothing
        lines = [json.loads(l) for l in (out / "verdicts.jsonl").read_text().splitlines()]
        assert lines[0]["flagged"] is False and lines[1]["flagged"] is True


class TestMonteCarloCommand:
    def _config(self, tmp_path, trials_seed=5):
        return write_config(tmp_path, {
            "seed": trials_seed,
            "synth": {"duration_s": 120.0, "n_hits": 60, "inter_hit_frames": [30, 40]},
            "aed": {"quality": {"tpr": 0.9, "fpr": 0.0005}},
            "ved": {"quality": {"tpr": 0.95, "fpr": 0.0}},
            "offsets": {"fraction_offset": 0.5},
        })

    def test_zero_trials_exit_2(self, tmp_path):
        assert main(["montecarlo", "--config", self._config(tmp_path), "--trials", "0"]) == 2

    def test_runs_and_reports(self, tmp_path, capsys):
        out = tmp_path / "mc"
        rc = main([
            "montecarlo", "--config", self._config(tmp_path),
            "--trials", "4", "--out", str(out),
        ])
        assert rc == 0
        summary = json.loads(capsys.readouterr().out.strip().splitlines()[-1])
        assert summary["trials"] == 4
        assert 0.0 <= summary["mean_precision"] <= 1.0
        payload = json.loads((out / "montecarlo.json").read_text())
        assert len(payload["trials"]) == 4

    def test_deterministic_across_runs(self, tmp_path, capsys):
        cfg = self._config(tmp_path)
        main(["montecarlo", "--config", cfg, "--trials", "3"])
        first = capsys.readouterr().out
        main(["montecarlo", "--config", cfg, "--trials", "3"])
        second = capsys.readouterr().out
        assert first == second

    def test_parallel_matches_serial(self, tmp_path, capsys):
        cfg = self._config(tmp_path)
        main(["montecarlo", "--config", cfg, "--trials", "3", "--workers", "1"])
        serial = capsys.readouterr().out
        main(["montecarlo", "--config", cfg, "--trials", "3", "--workers", "2"])
        parallel = capsys.readouterr().out
        assert serial == parallel


class TestEvalCommand:
    def test_tables_and_metrics(self, tmp_path, corpus, capsys):
        spec, corpus_dir = corpus
        # predictions: all hits except the first, plus one adjacent FP at 51
        scores = tmp_path / "pred.csv"
        rows = ["index,score"] + [f"{h},0.9" for h in spec.hit_frames[1:]] + ["51,0.9"]
        scores.write_text("\n".join(rows) + "\n")
        out = tmp_path / "eval"
        rc = main([
            "eval",
            "--audio-scores", str(scores),
            "--labels", str(corpus_dir / "labels.jsonl"),
            "--out", str(out),
        ])
        assert rc == 0
        report = json.loads((out / "eval.json").read_text())
        assert report["raw"]["tp"] == 9 and report["raw"]["fp"] == 1 and report["raw"]["fn"] == 1
        # FP at 51 pairs with FN at 50
        assert report["pairs_adjusted"] == 1
        assert report["adjusted"]["fp"] == 0 and report["adjusted"]["fn"] == 0
        assert "Predicted Positives" in capsys.readouterr().out


class TestConfigHandling:
    def test_unknown_key_rejected(self, tmp_path):
        cfg = write_config(tmp_path, {"synth": {"duration_s": 1.0}, "typo": 1})
        assert main(["synth", "--config", cfg, "--out", str(tmp_path / "o")]) == 2

    def test_missing_config_file(self, tmp_path):
        assert main(["synth", "--config", str(tmp_path / "nope.json"), "--out", "o"]) == 2

    def test_flags_override_config(self, tmp_path):
        cfg = write_config(tmp_path, {"synth": {"duration_s": 2.0, "n_hits": 2}, "seed": 1})
        out_a, out_b = tmp_path / "a", tmp_path / "b"
        assert main(["synth", "--config", cfg, "--out", str(out_a)]) == 0
        assert main(["synth", "--config", cfg, "--seed", "99", "--out", str(out_b)]) == 0
        manifest_a = json.loads((out_a / "manifest.json").read_text())
        manifest_b = json.loads((out_b / "manifest.json").read_text())
        assert manifest_a["spec"]["seed"] == 1 and manifest_b["spec"]["seed"] == 99
