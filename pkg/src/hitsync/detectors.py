"""Per-index hit decisions from pluggable sources.

Three detector families produce the same DetectionStream shape:

* score files written by external models (CSV `index,score`);
* a built-in DSP transient detector for synthetic audio, based on
  half-wave-rectified spectral flux;
* stochastic label-conditioned detectors for Monte Carlo evaluation.

Streams are immutable once built; an index absent from a stream is "not a
hit", so sparse streams are valid.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from enum import Enum
from pathlib import Path
from typing import Iterable, Mapping

import numpy as np

from .audio_features import AudioBuffer
from .errors import ConfigError, FormatError
from .timeline import EventLabel, LabelTrack, SegmentGrid

#: Flux-ratio decision threshold for the DSP detector, calibrated on the
#: synthetic corpus: at 20 dB SNR hit segments score ~2000 while background
#: noise and bounce transients stay under ~180 (see README).
DEFAULT_FLUX_THRESHOLD = 400.0

#: Flux is summed over bins at or above this frequency.  Impact transients
#: are broadband; bounce thuds and crowd babble live below it.
DEFAULT_FLUX_FMIN_HZ = 2000.0


class StreamKind(Enum):
    AUDIO_SEGMENT = "audio-segment"
    VIDEO_BLOCK = "video-block"


@dataclass(frozen=True)
class Decision:
    score: float
    is_hit: bool


@dataclass(frozen=True)
class DetectionStream:
    """Per-index decisions for one stream; treat as immutable once built."""

    kind: StreamKind
    decisions: Mapping[int, Decision]

    def __len__(self) -> int:
        return len(self.decisions)

    def is_hit(self, index: int) -> bool:
        d = self.decisions.get(index)
        return d.is_hit if d is not None else False

    def score(self, index: int) -> float:
        d = self.decisions.get(index)
        return d.score if d is not None else 0.0

    def hit_indices(self) -> list[int]:
        return sorted(i for i, d in self.decisions.items() if d.is_hit)

    @classmethod
    def from_hits(cls, indices: Iterable[int], kind: StreamKind, score: float = 1.0) -> "DetectionStream":
        return cls(kind=kind, decisions={int(i): Decision(score, True) for i in indices})


@dataclass(frozen=True)
class DetectorQuality:
    """Bernoulli detector model: true/false positive rates plus RNG seed."""

    tpr: float
    fpr: float
    seed: int = 0

    def __post_init__(self) -> None:
        if not (0.0 <= self.tpr <= 1.0 and 0.0 <= self.fpr <= 1.0):
            raise ConfigError(f"tpr/fpr must lie in [0, 1], got {self.tpr}/{self.fpr}")


def load_scores(
    path: str | Path,
    threshold: float,
    kind: StreamKind = StreamKind.AUDIO_SEGMENT,
) -> DetectionStream:
    """Read a CSV score file (`index,score` with header) and threshold it.

    An entirely empty file is a valid empty stream.  Scores must lie in
    [0, 1]; duplicate or malformed rows fail with their line number.
    """
    path = Path(path)
    decisions: dict[int, Decision] = {}
    with path.open("r", encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            return DetectionStream(kind=kind, decisions={})
        if [c.strip().lower() for c in header] != ["index", "score"]:
            raise FormatError(f"{path}: line 1: expected header 'index,score'")
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != 2:
                raise FormatError(f"{path}: line {lineno}: expected two columns")
            try:
                index = int(row[0])
                score = float(row[1])
            except ValueError:
                raise FormatError(f"{path}: line {lineno}: bad row {row!r}") from None
            if index < 0:
                raise FormatError(f"{path}: line {lineno}: negative index {index}")
            if not 0.0 <= score <= 1.0:
                raise FormatError(f"{path}: line {lineno}: score {score} outside [0, 1]")
            if index in decisions:
                raise FormatError(f"{path}: line {lineno}: duplicate index {index}")
            decisions[index] = Decision(score=score, is_hit=score >= threshold)
    return DetectionStream(kind=kind, decisions=decisions)


def write_scores(path: str | Path, stream: DetectionStream) -> None:
    """Write a stream as a CSV score file (inverse of load_scores)."""
    with Path(path).open("w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["index", "score"])
        for index in sorted(stream.decisions):
            writer.writerow([index, f"{stream.decisions[index].score:.6f}"])


def dsp_aed(
    buf: AudioBuffer,
    grid: SegmentGrid,
    threshold: float = DEFAULT_FLUX_THRESHOLD,
    flux_fmin_hz: float = DEFAULT_FLUX_FMIN_HZ,
    eps: float = 1e-9,
) -> DetectionStream:
    """Reference DSP transient detector over the segment grid.

    The buffer is cut into frame-length windows (one per video frame, window
    length == hop == grid stride) and the half-wave-rectified spectral flux
    between consecutive window magnitudes is taken as the maximum rectified
    increase over bins >= flux_fmin_hz.  Segment i's raw score is the flux at
    its leading frame divided by the segment RMS (+ eps), which makes
    decisions invariant to global gain.  A segment is a hit iff its raw score
    reaches `threshold` and is a local maximum among the segments within +-1
    index.

    Two choices here are load-bearing.  Frame-aligned windows attribute an
    onset to the one segment that starts at it; overlapping-window flux would
    spread the same transient over four adjacent segments and make the
    detected index ambiguous.  And the per-frame flux is the max over bins,
    not the sum: a broadband noise floor contributes rectified fluctuation in
    every bin, so the summed flux of pure noise rivals a concentrated
    transient, while the per-bin maximum keeps them two orders of magnitude
    apart.

    Stored scores are the raw flux ratio mapped to [0, 1) via s / (1 + s);
    the mapping is monotone, so score ordering is preserved.
    """
    spf = grid.stride
    x = buf.samples
    n_frames = len(x) // spf
    n_seg = grid.n_segments(len(x))
    if n_seg < 1:
        raise ValueError(f"buffer of {len(x)} samples holds no full {grid.segment_len}-sample segment")

    frames = x[: n_frames * spf].reshape(n_frames, spf)
    mag = np.abs(np.fft.rfft(frames, axis=1))
    k0 = int(np.ceil(flux_fmin_hz * spf / buf.sample_rate))
    k0 = min(k0, mag.shape[1] - 1)
    flux = np.zeros(n_frames)
    flux[1:] = np.maximum(mag[1:, k0:] - mag[:-1, k0:], 0.0).max(axis=1)

    csum = np.concatenate([[0.0], np.cumsum(x * x)])
    starts = np.arange(n_seg) * grid.stride
    seg_rms = np.sqrt((csum[starts + grid.segment_len] - csum[starts]) / grid.segment_len)

    raw = flux[:n_seg] / (seg_rms + eps)
    left = np.concatenate([[-np.inf], raw[:-1]])
    right = np.concatenate([raw[1:], [-np.inf]])
    hits = (raw >= threshold) & (raw >= left) & (raw >= right)

    decisions = {
        i: Decision(score=float(raw[i] / (1.0 + raw[i])), is_hit=bool(hits[i]))
        for i in range(n_seg)
    }
    return DetectionStream(kind=StreamKind.AUDIO_SEGMENT, decisions=decisions)


def bernoulli_stream(
    true_indices: Iterable[int],
    n_indices: int,
    quality: DetectorQuality,
    kind: StreamKind,
) -> DetectionStream:
    """Stochastic detector over indices [0, n_indices).

    One uniform draw per index (common random numbers), compared to tpr for
    true indices and fpr for the rest, so raising either rate can only add
    hits for a fixed seed.  Only hits are stored.
    """
    truth = np.zeros(n_indices, dtype=bool)
    for i in true_indices:
        if not 0 <= i < n_indices:
            raise ValueError(f"true index {i} outside universe of {n_indices}")
        truth[i] = True
    rng = np.random.default_rng(quality.seed)
    draws = rng.random(n_indices)
    hits = np.flatnonzero(draws < np.where(truth, quality.tpr, quality.fpr))
    return DetectionStream.from_hits(hits, kind=kind)


def oracle_detector(
    track: LabelTrack,
    target: EventLabel,
    quality: DetectorQuality,
    kind: StreamKind = StreamKind.AUDIO_SEGMENT,
    n_indices: int | None = None,
) -> DetectionStream:
    """Label-conditioned stochastic detector.

    Each index whose frame carries `target` is detected with probability tpr,
    every other index with probability fpr.  For audio-segment streams the
    universe defaults to one index per labeled frame; for video-block streams
    it defaults to the valid 3-frame block starts.
    """
    if n_indices is None:
        n_indices = len(track.labels)
        if kind is StreamKind.VIDEO_BLOCK:
            n_indices = max(0, n_indices - 2)
    true_indices = [f for f in track.frames_with(target) if f < n_indices]
    return bernoulli_stream(true_indices, n_indices, quality, kind)


def video_block_detector(stream: DetectionStream, block_start: int) -> bool:
    """Decision for the block starting at `block_start`; absent means no hit."""
    if stream.kind is not StreamKind.VIDEO_BLOCK:
        raise ValueError(f"expected a video-block stream, got {stream.kind.value}")
    return stream.is_hit(block_start)
