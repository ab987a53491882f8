"""Synthetic, perfectly synchronized labeled A/V event streams.

The generator builds PCM audio (Gaussian background noise, optionally with a
band-limited babble layer, plus damped sinusoid bursts at event frames), the
matching per-frame label track, and the ground-truth video stream that marks
a block start as a hit iff that frame is a hit.  Everything is synchronized
by construction and deterministic under a fixed seed.

Hit transients default to a bright 4 kHz burst; bounces are quieter and
lower-pitched so threshold-based audio detectors get a genuine hard negative.
Acoustic realism is beside the point: the reference detector is calibrated on
this same generator, so the corpus exists to validate the pipeline.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .audio_features import AudioBuffer
from .audio_io import save_wav
from .detectors import DetectionStream, StreamKind, write_scores
from .errors import ConfigError
from .timeline import ClockSpec, EventLabel, LabelTrack, write_label_track


@dataclass(frozen=True)
class TransientSpec:
    """Exponentially decaying band-limited burst."""

    decay_ms: float = 20.0
    center_freq_hz: float = 4000.0
    amplitude: float = 0.5

    def __post_init__(self) -> None:
        if self.amplitude <= 0:
            raise ConfigError("transient amplitude must be positive")
        if self.decay_ms <= 0 or self.center_freq_hz <= 0:
            raise ConfigError("transient decay and center frequency must be positive")


@dataclass(frozen=True)
class BackgroundSpec:
    """Gaussian noise floor, optionally with a band-limited babble layer."""

    noise_level: float = 0.005  # RMS
    babble_rms: float = 0.0
    babble_band_hz: tuple[float, float] = (300.0, 3000.0)

    def __post_init__(self) -> None:
        if self.noise_level < 0 or self.babble_rms < 0:
            raise ConfigError("background levels must be non-negative")
        lo, hi = self.babble_band_hz
        if not 0 <= lo < hi:
            raise ConfigError(f"bad babble band {self.babble_band_hz}")


BOUNCE_TRANSIENT = TransientSpec(decay_ms=30.0, center_freq_hz=800.0, amplitude=0.15)


@dataclass(frozen=True)
class SynthSpec:
    """Recipe for one synthetic clip."""

    duration_s: float
    clock: ClockSpec = ClockSpec()
    hit_frames: tuple[int, ...] = ()
    bounce_frames: tuple[int, ...] = ()
    hit_transient: TransientSpec = TransientSpec()
    bounce_transient: TransientSpec = BOUNCE_TRANSIENT
    background: BackgroundSpec = BackgroundSpec()
    seed: int = 0

    def __post_init__(self) -> None:
        if self.duration_s <= 0:
            raise ConfigError("duration must be positive")
        overlap = set(self.hit_frames) & set(self.bounce_frames)
        if overlap:
            raise ConfigError(f"frames marked both hit and bounce: {sorted(overlap)}")
        for f in (*self.hit_frames, *self.bounce_frames):
            if not 0 <= f < self.n_frames:
                raise ConfigError(f"event frame {f} outside clip of {self.n_frames} frames")

    @property
    def n_frames(self) -> int:
        return int(round(self.duration_s * self.clock.fps))

    @property
    def total_samples(self) -> int:
        return self.n_frames * self.clock.samples_per_frame

    @property
    def snr_db(self) -> float:
        """Hit peak amplitude over background noise RMS, in dB."""
        if self.background.noise_level == 0:
            return float("inf")
        return 20.0 * np.log10(self.hit_transient.amplitude / self.background.noise_level)


def _burst(spec: TransientSpec, sample_rate: int, max_len: int) -> np.ndarray:
    """Damped sinusoid, truncated after eight decay constants or max_len."""
    tau = spec.decay_ms * sample_rate / 1000.0
    n = min(int(round(8 * tau)), max_len)
    t = np.arange(n)
    return spec.amplitude * np.exp(-t / tau) * np.sin(2 * np.pi * spec.center_freq_hz * t / sample_rate)


def _babble(rng: np.random.Generator, n: int, background: BackgroundSpec, sample_rate: int) -> np.ndarray:
    white = rng.standard_normal(n)
    spectrum = np.fft.rfft(white)
    freqs = np.fft.rfftfreq(n, d=1.0 / sample_rate)
    lo, hi = background.babble_band_hz
    spectrum[(freqs < lo) | (freqs > hi)] = 0.0
    band = np.fft.irfft(spectrum, n)
    rms = np.sqrt(np.mean(band**2))
    if rms > 0:
        band *= background.babble_rms / rms
    return band


def generate(spec: SynthSpec) -> tuple[AudioBuffer, LabelTrack, DetectionStream]:
    """Render a spec into audio, labels, and the video truth stream.

    For every hit frame h: the audio burst starts exactly at h's first
    sample, frame h is labeled HIT, and block start h is a truth hit, so the
    three outputs are mutually synchronized by construction.
    """
    rng = np.random.default_rng(spec.seed)
    sr = spec.clock.sample_rate
    total = spec.total_samples

    if spec.background.noise_level > 0:
        samples = rng.normal(0.0, spec.background.noise_level, total)
    else:
        samples = np.zeros(total)
    if spec.background.babble_rms > 0:
        samples = samples + _babble(rng, total, spec.background, sr)

    for frames, transient in (
        (spec.hit_frames, spec.hit_transient),
        (spec.bounce_frames, spec.bounce_transient),
    ):
        for f in frames:
            start = spec.clock.frame_start_sample(f)
            burst = _burst(transient, sr, total - start)
            samples[start : start + len(burst)] += burst

    np.clip(samples, -1.0, 1.0, out=samples)

    labels = [EventLabel.NEITHER] * spec.n_frames
    for f in spec.hit_frames:
        labels[f] = EventLabel.HIT
    for f in spec.bounce_frames:
        labels[f] = EventLabel.BOUNCE
    track = LabelTrack(clock=spec.clock, labels=tuple(labels))

    truth = DetectionStream.from_hits(spec.hit_frames, kind=StreamKind.VIDEO_BLOCK)
    return AudioBuffer(samples=samples, sample_rate=sr), track, truth


def make_rally(
    template: SynthSpec,
    n_hits: int,
    inter_hit_frames: tuple[int, int] = (24, 40),
    start_frame: int | None = None,
    with_bounces: bool = False,
) -> SynthSpec:
    """Place n_hits with uniformly drawn gaps; extends the clip if needed.

    Optionally drops a bounce halfway through each gap.  Placement draws from
    a dedicated RNG stream off the template seed, so the rally layout and the
    audio noise are independently reproducible.
    """
    if n_hits < 0:
        raise ConfigError("n_hits must be non-negative")
    lo, hi = inter_hit_frames
    if lo < 2 or hi < lo:
        raise ConfigError(f"infeasible hit spacing {inter_hit_frames}; need 2 <= lo <= hi")

    rng = np.random.default_rng([template.seed, 1])
    first = lo if start_frame is None else start_frame
    if first < 0:
        raise ConfigError("start_frame must be non-negative")
    hits: list[int] = []
    frame = first
    for _ in range(n_hits):
        hits.append(frame)
        frame += int(rng.integers(lo, hi + 1))

    bounces: list[int] = []
    if with_bounces:
        bounces = [(a + b) // 2 for a, b in zip(hits, hits[1:])]

    duration = template.duration_s
    if hits:
        tail_frames = hits[-1] + 2 * (hi + 1)
        needed = tail_frames / template.clock.fps
        if needed > duration:
            duration = needed
    return replace(
        template,
        duration_s=duration,
        hit_frames=tuple(hits),
        bounce_frames=tuple(bounces),
    )


def write_corpus(out_dir: str | Path, spec: SynthSpec) -> dict:
    """Generate a spec and write WAV + label JSONL + video-truth CSV + manifest.

    Returns the manifest dict (also written as manifest.json).
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    buf, track, truth = generate(spec)

    audio_path = out_dir / "audio.wav"
    labels_path = out_dir / "labels.jsonl"
    truth_path = out_dir / "video_truth.csv"
    save_wav(audio_path, buf)
    write_label_track(labels_path, track)
    write_scores(truth_path, truth)

    manifest = {
        "audio": audio_path.name,
        "labels": labels_path.name,
        "video_truth": truth_path.name,
        "n_frames": spec.n_frames,
        "total_samples": spec.total_samples,
        "spec": {
            "duration_s": spec.duration_s,
            "fps": spec.clock.fps,
            "sample_rate": spec.clock.sample_rate,
            "hit_frames": list(spec.hit_frames),
            "bounce_frames": list(spec.bounce_frames),
            "hit_transient": vars(spec.hit_transient),
            "bounce_transient": vars(spec.bounce_transient),
            "background": {
                "noise_level": spec.background.noise_level,
                "babble_rms": spec.background.babble_rms,
                "babble_band_hz": list(spec.background.babble_band_hz),
            },
            "snr_db": spec.snr_db if np.isfinite(spec.snr_db) else None,
            "seed": spec.seed,
        },
    }
    (out_dir / "manifest.json").write_text(json.dumps(manifest, indent=2) + "\n", encoding="utf-8")
    return manifest
