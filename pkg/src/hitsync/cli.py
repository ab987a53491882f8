"""Command-line front end.

Subcommands: synth, extract, check, montecarlo, eval.  Each run is driven by
a JSON config file plus flag overrides (flags win).  Exit codes: 0 success
(and, for `check`, no sync error), 1 sync error flagged, 2 configuration or
input error.
"""

from __future__ import annotations

import argparse
import json
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path
from typing import Any, Mapping

import numpy as np

from . import audio_io, evaluation, sync_engine, synth
from .audio_features import MfccParams, extract_features
from .detectors import (
    DEFAULT_FLUX_FMIN_HZ,
    DEFAULT_FLUX_THRESHOLD,
    DetectionStream,
    DetectorQuality,
    StreamKind,
    bernoulli_stream,
    dsp_aed,
    load_scores,
)
from .errors import ConfigError, FormatError
from .sync_engine import OffsetSpec, SearchPolicy
from .timeline import (
    ClockSpec,
    EventLabel,
    LabelTrack,
    SegmentGrid,
    hit_covering_blocks,
    read_label_track,
    usable_segments,
)

_CONFIG_SECTIONS = {
    "seed",
    "threshold",
    "universe",
    "paths",
    "synth",
    "mfcc",
    "policy",
    "offsets",
    "aed",
    "ved",
    "eval",
}

_PATH_KEYS = {"audio", "labels", "audio_scores", "video_scores", "out"}


def load_config(path: str | Path | None) -> dict:
    if path is None:
        return {}
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"config file {path} does not exist")
    try:
        cfg = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON ({exc.msg})") from None
    if not isinstance(cfg, dict):
        raise ConfigError(f"{path}: config must be a JSON object")
    unknown = set(cfg) - _CONFIG_SECTIONS
    if unknown:
        raise ConfigError(f"{path}: unknown config keys {sorted(unknown)}")
    paths = cfg.get("paths", {})
    if not isinstance(paths, dict) or set(paths) - _PATH_KEYS:
        raise ConfigError(f"{path}: paths section may only contain {sorted(_PATH_KEYS)}")
    return cfg


def merge_flags(cfg: dict, args: argparse.Namespace) -> dict:
    """Overlay command-line flags onto the config; flags win."""
    cfg = dict(cfg)
    cfg.setdefault("paths", {})
    cfg["paths"] = dict(cfg["paths"])
    for key in ("audio", "labels", "audio_scores", "video_scores", "out"):
        value = getattr(args, key, None)
        if value is not None:
            cfg["paths"][key] = value
    if getattr(args, "seed", None) is not None:
        cfg["seed"] = args.seed
    if getattr(args, "threshold", None) is not None:
        cfg["threshold"] = args.threshold
    return cfg


def _require_path(cfg: Mapping, key: str, must_exist: bool = True) -> Path:
    value = cfg.get("paths", {}).get(key)
    if value is None:
        raise ConfigError(f"missing required path '{key}' (flag --{key.replace('_', '-')})")
    p = Path(value)
    if must_exist and not p.exists():
        raise ConfigError(f"{key} path {p} does not exist")
    return p


def _optional_path(cfg: Mapping, key: str) -> Path | None:
    value = cfg.get("paths", {}).get(key)
    if value is None:
        return None
    p = Path(value)
    if not p.exists():
        raise ConfigError(f"{key} path {p} does not exist")
    return p


def _build_clock(section: Mapping) -> ClockSpec:
    return ClockSpec(fps=int(section.get("fps", 25)), sample_rate=int(section.get("sample_rate", 48000)))


def build_synth_spec(cfg: Mapping) -> synth.SynthSpec:
    section = dict(cfg.get("synth", {}))
    clock = _build_clock(section)
    transient_keys = ("decay_ms", "center_freq_hz", "amplitude")

    def transient(key: str, default: synth.TransientSpec) -> synth.TransientSpec:
        sub = section.get(key, {})
        return synth.TransientSpec(**{k: sub.get(k, getattr(default, k)) for k in transient_keys})

    background = synth.BackgroundSpec(
        noise_level=float(section.get("noise_level", 0.005)),
        babble_rms=float(section.get("babble_rms", 0.0)),
        babble_band_hz=tuple(section.get("babble_band_hz", (300.0, 3000.0))),
    )
    spec = synth.SynthSpec(
        duration_s=float(section.get("duration_s", 60.0)),
        clock=clock,
        hit_frames=tuple(int(f) for f in section.get("hit_frames", ())),
        bounce_frames=tuple(int(f) for f in section.get("bounce_frames", ())),
        hit_transient=transient("hit_transient", synth.TransientSpec()),
        bounce_transient=transient("bounce_transient", synth.BOUNCE_TRANSIENT),
        background=background,
        seed=int(section.get("seed", cfg.get("seed", 0))),
    )
    if "n_hits" in section:
        spec = synth.make_rally(
            spec,
            n_hits=int(section["n_hits"]),
            inter_hit_frames=tuple(section.get("inter_hit_frames", (24, 40))),
            start_frame=section.get("start_frame"),
            with_bounces=bool(section.get("with_bounces", False)),
        )
    return spec


def build_policy(cfg: Mapping) -> SearchPolicy:
    section = cfg.get("policy", {})
    return SearchPolicy(
        block_offsets=tuple(section.get("block_offsets", (-6, -3, 0))),
        block_len=int(section.get("block_len", 3)),
    )


def build_offset_spec(cfg: Mapping) -> OffsetSpec:
    section = cfg.get("offsets", {})
    seed = section.get("seed", cfg.get("seed"))
    if seed is None:
        raise ConfigError("offset injection is stochastic: set offsets.seed or a top-level seed")
    return OffsetSpec(
        lo=int(section.get("lo", -15)),
        hi=int(section.get("hi", 15)),
        excluded=tuple(section.get("excluded", (-3, 6))),
        fraction_offset=float(section.get("fraction_offset", 0.5)),
        seed=int(seed),
    )


def build_mfcc_params(cfg: Mapping) -> MfccParams:
    section = cfg.get("mfcc", {})
    return MfccParams(
        n_fft=int(section.get("n_fft", 2048)),
        hop=int(section.get("hop", 128)),
        n_mfcc=int(section.get("n_mfcc", 61)),
        n_mels=int(section.get("n_mels", 128)),
        fmin=float(section.get("fmin", 0.0)),
        fmax=section.get("fmax"),
        sample_rate=int(section.get("sample_rate", 48000)),
        window=section.get("window", "hann"),
        centered=bool(section.get("centered", True)),
    )


def _quality(section: Mapping, seed: int) -> DetectorQuality:
    q = section.get("quality")
    if q is None:
        raise ConfigError("stochastic detector requested but no 'quality' {tpr, fpr} configured")
    return DetectorQuality(tpr=float(q["tpr"]), fpr=float(q["fpr"]), seed=seed)


def _audio_stream(cfg: Mapping, grid: SegmentGrid) -> tuple[DetectionStream, int | None]:
    """Audio detections plus the frame count implied by the audio, if any."""
    scores = _optional_path(cfg, "audio_scores")
    if scores is not None:
        return load_scores(scores, float(cfg.get("threshold", 0.5)), StreamKind.AUDIO_SEGMENT), None
    wav = _optional_path(cfg, "audio")
    if wav is not None:
        buf = audio_io.load_wav(wav, expected_rate=grid.clock.sample_rate)
        aed_cfg = cfg.get("aed", {})
        stream = dsp_aed(
            buf,
            grid,
            threshold=float(aed_cfg.get("threshold", DEFAULT_FLUX_THRESHOLD)),
            flux_fmin_hz=float(aed_cfg.get("flux_fmin_hz", DEFAULT_FLUX_FMIN_HZ)),
        )
        return stream, len(buf) // grid.clock.samples_per_frame
    raise ConfigError("no audio detections: provide --audio-scores or --audio")


def _video_stream(cfg: Mapping, track: LabelTrack | None, policy: SearchPolicy) -> DetectionStream:
    scores = _optional_path(cfg, "video_scores")
    if scores is not None:
        return load_scores(scores, float(cfg.get("threshold", 0.5)), StreamKind.VIDEO_BLOCK)
    ved_cfg = cfg.get("ved", {})
    if "quality" in ved_cfg and track is not None:
        seed = ved_cfg.get("seed", cfg.get("seed"))
        if seed is None:
            raise ConfigError("stochastic video detector needs ved.seed or a top-level seed")
        truth = hit_covering_blocks(track, EventLabel.HIT, policy.block_len)
        n_blocks = max(0, len(track) - policy.block_len + 1)
        return bernoulli_stream(truth, n_blocks, _quality(ved_cfg, int(seed)), StreamKind.VIDEO_BLOCK)
    raise ConfigError("no video detections: provide --video-scores or a ved.quality with labels")


def cmd_synth(cfg: Mapping, args: argparse.Namespace) -> int:
    out = _require_path(cfg, "out", must_exist=False)
    spec = build_synth_spec(cfg)
    manifest = synth.write_corpus(out, spec)
    print(f"wrote corpus to {out} ({manifest['n_frames']} frames, "
          f"{len(manifest['spec']['hit_frames'])} hits, "
          f"{len(manifest['spec']['bounce_frames'])} bounces)")
    return 0


def cmd_extract(cfg: Mapping, args: argparse.Namespace) -> int:
    wav = _require_path(cfg, "audio")
    out = _require_path(cfg, "out", must_exist=False)
    out.mkdir(parents=True, exist_ok=True)
    params = build_mfcc_params(cfg)
    clock = ClockSpec(sample_rate=params.sample_rate)
    grid = SegmentGrid(clock=clock)
    buf = audio_io.load_wav(wav, expected_rate=clock.sample_rate)

    labels_path = _optional_path(cfg, "labels")
    track = read_label_track(labels_path, clock) if labels_path is not None else None
    n = grid.n_segments(len(buf))
    if track is not None:
        n = usable_segments(track, grid, len(buf))

    records = []
    for i in range(n):
        start, _ = grid.sample_range(i)
        label = track.labels[i].value if track is not None else None
        records.append({"segment_index": i, "start_sample": start, "label": label})
    images = (extract_features(buf, grid, i, params).data for i in range(n))
    count = audio_io.write_feature_dump(out / "features.bin", out / "features.json", images, records)
    print(f"extracted {count} segments -> {out / 'features.bin'}")
    return 0


def cmd_check(cfg: Mapping, args: argparse.Namespace) -> int:
    out = _require_path(cfg, "out", must_exist=False)
    out.mkdir(parents=True, exist_ok=True)
    policy = build_policy(cfg)
    clock = _build_clock(cfg.get("synth", {}))
    grid = SegmentGrid(clock=clock)

    labels_path = _optional_path(cfg, "labels")
    track = read_label_track(labels_path, clock) if labels_path is not None else None

    audio_stream, audio_frames = _audio_stream(cfg, grid)
    if track is not None:
        total_frames = len(track)
    elif audio_frames is not None:
        total_frames = audio_frames
    else:
        video_path = _optional_path(cfg, "video_scores")
        if video_path is None:
            raise ConfigError("cannot size the video timeline: provide --labels or --audio")
        stream = load_scores(video_path, float(cfg.get("threshold", 0.5)), StreamKind.VIDEO_BLOCK)
        total_frames = (max(stream.decisions) + policy.block_len) if stream.decisions else 0

    video_stream = _video_stream(cfg, track, policy)

    offsets = None
    if args.inject:
        offsets = sync_engine.inject_offsets(audio_stream, build_offset_spec(cfg))

    verdicts = sync_engine.run_sync_detection(
        audio_stream, video_stream, policy, total_frames, offsets
    )
    sync_engine.write_verdicts(out / "verdicts.jsonl", verdicts)
    report = evaluation.sync_error_report(verdicts, offsets)
    evaluation.write_report(out / "report.json", report, config=_echo(cfg))

    flagged = sum(v.flagged for v in verdicts)
    print(f"{len(verdicts)} detections checked, {flagged} sync error(s) flagged")
    return 1 if flagged else 0


def _echo(cfg: Mapping) -> dict:
    return json.loads(json.dumps(dict(cfg)))  # plain-JSON deep copy


def _mc_trial(cfg: dict, trial: int) -> dict:
    """One Monte Carlo trial; independent RNG streams per stage."""
    base = int(cfg.get("seed", 0))
    clock = _build_clock(cfg.get("synth", {}))
    labels = cfg.get("paths", {}).get("labels")
    if labels is not None:
        track = read_label_track(labels, clock)
    elif "synth" in cfg:
        spec = build_synth_spec(cfg)
        track = LabelTrack(
            clock=clock,
            labels=tuple(
                EventLabel.HIT if f in set(spec.hit_frames)
                else EventLabel.BOUNCE if f in set(spec.bounce_frames)
                else EventLabel.NEITHER
                for f in range(spec.n_frames)
            ),
        )
    else:
        raise ConfigError("montecarlo needs --labels or a synth section to define ground truth")

    policy = build_policy(cfg)
    grid = SegmentGrid(clock=clock)
    n_segments = grid.n_segments(len(track) * clock.samples_per_frame)

    from .detectors import oracle_detector  # local import keeps worker pickling simple

    aed_q = _quality(cfg.get("aed", {}), seed=base + 3 * trial)
    audio = oracle_detector(track, EventLabel.HIT, aed_q, StreamKind.AUDIO_SEGMENT, n_segments)

    ved_q = _quality(cfg.get("ved", {}), seed=base + 3 * trial + 1)
    truth_blocks = hit_covering_blocks(track, EventLabel.HIT, policy.block_len)
    video = bernoulli_stream(
        truth_blocks, max(0, len(track) - policy.block_len + 1), ved_q, StreamKind.VIDEO_BLOCK
    )

    offset_spec = build_offset_spec({**cfg, "seed": base + 3 * trial + 2})
    offsets = sync_engine.inject_offsets(audio, offset_spec)
    verdicts = sync_engine.run_sync_detection(audio, video, policy, len(track), offsets)
    report = evaluation.sync_error_report(verdicts, offsets)
    return {
        "trial": trial,
        "detections": len(verdicts),
        "flagged": sum(v.flagged for v in verdicts),
        "injected": len(offsets),
        "precision": report.precision,
        "recall": report.recall,
    }


def cmd_montecarlo(cfg: Mapping, args: argparse.Namespace) -> int:
    if args.trials <= 0:
        raise ConfigError(f"--trials must be positive, got {args.trials}")
    out = _optional_out(cfg)
    cfg_dict = _echo(cfg)

    if args.workers > 1:
        with ProcessPoolExecutor(max_workers=args.workers) as pool:
            results = list(pool.map(_mc_trial, [cfg_dict] * args.trials, range(args.trials)))
    else:
        results = [_mc_trial(cfg_dict, t) for t in range(args.trials)]
    results.sort(key=lambda r: r["trial"])

    summary = {"trials": args.trials}
    for metric in ("precision", "recall"):
        values = [r[metric] for r in results if r[metric] is not None]
        summary[f"defined_{metric}"] = len(values)
        summary[f"mean_{metric}"] = round(float(np.mean(values)), 6) if values else None
        summary[f"std_{metric}"] = round(float(np.std(values)), 6) if values else None
    payload = {"summary": summary, "trials": results, "config": cfg_dict}
    if out is not None:
        out.mkdir(parents=True, exist_ok=True)
        (out / "montecarlo.json").write_text(json.dumps(payload, indent=2) + "\n", encoding="utf-8")
    print(json.dumps(summary))
    return 0


def _optional_out(cfg: Mapping) -> Path | None:
    value = cfg.get("paths", {}).get("out")
    return Path(value) if value is not None else None


def cmd_eval(cfg: Mapping, args: argparse.Namespace) -> int:
    scores = _require_path(cfg, "audio_scores")
    labels = _require_path(cfg, "labels")
    clock = _build_clock(cfg.get("synth", {}))
    track = read_label_track(labels, clock)
    grid = SegmentGrid(clock=clock)

    pred = load_scores(scores, float(cfg.get("threshold", 0.5)), StreamKind.AUDIO_SEGMENT)
    universe = int(cfg.get("universe", grid.n_segments(len(track) * clock.samples_per_frame)))
    truth = [f for f in track.frames_with(EventLabel.HIT) if f < universe]
    radius = int(cfg.get("eval", {}).get("radius", 1))

    raw = evaluation.confusion(pred, truth, universe)
    adjusted, pairs = evaluation.adjacency_adjust(pred, truth, universe, radius)
    report = evaluation.SyncReport(raw=raw, adjusted=adjusted, pairs_adjusted=pairs)

    print(evaluation.format_table(raw, "Raw counts"))
    print()
    print(evaluation.format_table(adjusted, f"Adjusted counts ({pairs} adjacent pairs)"))
    p, r = evaluation.metrics(adjusted)
    print()
    print(f"precision {p:.4%}  recall {r:.4%}" if p is not None and r is not None
          else f"precision {p}  recall {r}")
    out = _optional_out(cfg)
    if out is not None:
        out.mkdir(parents=True, exist_ok=True)
        evaluation.write_report(out / "eval.json", report, config=_echo(cfg))
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="hitsync", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p: argparse.ArgumentParser, *, scores: bool = True) -> None:
        p.add_argument("--config", help="JSON run config")
        p.add_argument("--seed", type=int, help="override the config seed")
        p.add_argument("--out", help="output directory")
        p.add_argument("--audio", help="input WAV path")
        p.add_argument("--labels", help="label track (JSONL or CSV)")
        if scores:
            p.add_argument("--audio-scores", dest="audio_scores", help="audio score CSV")
            p.add_argument("--video-scores", dest="video_scores", help="video score CSV")
            p.add_argument("--threshold", type=float, help="score-file decision threshold")

    p_synth = sub.add_parser("synth", help="generate a synthetic labeled corpus")
    common(p_synth, scores=False)
    p_synth.set_defaults(func=cmd_synth)

    p_extract = sub.add_parser("extract", help="extract feature images from a WAV")
    common(p_extract, scores=False)
    p_extract.set_defaults(func=cmd_extract)

    p_check = sub.add_parser("check", help="run sync-error detection")
    common(p_check)
    p_check.add_argument("--inject", action="store_true", help="enable offset fault injection")
    p_check.set_defaults(func=cmd_check)

    p_mc = sub.add_parser("montecarlo", help="repeat the check pipeline with stochastic detectors")
    common(p_mc)
    p_mc.add_argument("--trials", type=int, default=0, help="number of seeded trials")
    p_mc.add_argument("--workers", type=int, default=1, help="parallel worker processes")
    p_mc.set_defaults(func=cmd_montecarlo)

    p_eval = sub.add_parser("eval", help="confusion matrices and metrics for a score file")
    common(p_eval)
    p_eval.add_argument("--universe", type=int, help="override the evaluation universe size")
    p_eval.set_defaults(func=cmd_eval)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        cfg = merge_flags(load_config(args.config), args)
        if getattr(args, "universe", None) is not None:
            cfg["universe"] = args.universe
        return args.func(cfg, args)
    except (ConfigError, FormatError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (ValueError, IndexError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
