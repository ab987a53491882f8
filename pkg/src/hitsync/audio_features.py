"""Cepstral feature images for audio segments.

A 7680-sample mono segment is turned into a (61, 60, 3) tensor: 61 cepstral
coefficients per analysis window, 60 windows per segment, and three channels
(coefficients, first temporal derivative, second temporal derivative).

Conventions, all fixed here because they are not forced by the shape contract
alone:

* centered framing with reflection padding of n_fft/2 on each side, window
  count = ceil(segment_len / hop) = 60 at defaults (uncentered framing would
  give 45 windows and cannot produce the 60-window contract);
* periodic Hann window;
* triangular mel filterbank on the Slaney scale (linear below 1 kHz,
  logarithmic above), area-normalized;
* log compression log(x + 1e-10);
* orthonormal DCT-II along the mel axis, coefficients 0..n_mfcc-1;
* derivatives via a least-squares slope filter of half-width 4 (9 points)
  with edge replication.

Everything is a pure function of its inputs; the filterbank and DCT basis
are cached per parameter set and shared read-only.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .errors import ConfigError
from .timeline import SegmentGrid

LOG_FLOOR = 1e-10

#: Slaney mel scale constants: linear below the break, log-spaced above.
_MEL_BREAK_HZ = 1000.0
_MEL_BREAK = 15.0
_MEL_LOG_STEP = np.log(6.4) / 27.0


@dataclass
class AudioBuffer:
    """Mono audio samples with their sample rate.

    Samples are float64 amplitudes, nominally in [-1, 1]; producers in this
    package guarantee the range by construction.
    """

    samples: np.ndarray
    sample_rate: int = 48000

    def __post_init__(self) -> None:
        self.samples = np.asarray(self.samples, dtype=np.float64)
        if self.samples.ndim != 1:
            raise ValueError(f"AudioBuffer wants mono 1-D samples, got shape {self.samples.shape}")
        if self.sample_rate <= 0:
            raise ConfigError("sample_rate must be positive")

    def __len__(self) -> int:
        return len(self.samples)

    @property
    def duration_s(self) -> float:
        return len(self.samples) / self.sample_rate


@dataclass(frozen=True)
class MfccParams:
    """Analysis parameters for the cepstral feature image."""

    n_fft: int = 2048
    hop: int = 128
    n_mfcc: int = 61
    n_mels: int = 128
    fmin: float = 0.0
    fmax: float | None = None  # None -> sample_rate / 2
    sample_rate: int = 48000
    window: str = "hann"
    centered: bool = True

    def __post_init__(self) -> None:
        if self.n_fft <= 0 or self.hop <= 0:
            raise ConfigError("n_fft and hop must be positive")
        if self.n_mfcc > self.n_mels:
            raise ConfigError(f"n_mfcc {self.n_mfcc} exceeds n_mels {self.n_mels}")
        if self.window not in ("hann", "hamming", "rect"):
            raise ConfigError(f"unsupported window {self.window!r}")
        fmax = self.effective_fmax
        if not 0 <= self.fmin < fmax <= self.sample_rate / 2:
            raise ConfigError(f"bad mel band edges fmin={self.fmin}, fmax={fmax}")

    @property
    def effective_fmax(self) -> float:
        return self.sample_rate / 2 if self.fmax is None else self.fmax

    @property
    def n_bins(self) -> int:
        return self.n_fft // 2 + 1

    def n_windows(self, segment_len: int) -> int:
        if self.centered:
            return -(-segment_len // self.hop)  # ceil
        return (segment_len - self.n_fft) // self.hop + 1


@dataclass
class FeatureImage:
    """(n_mfcc, n_windows, 3) tensor: coefficients, delta, delta-delta."""

    data: np.ndarray

    def __post_init__(self) -> None:
        self.data = np.asarray(self.data, dtype=np.float64)
        if self.data.ndim != 3 or self.data.shape[2] != 3:
            raise ValueError(f"feature image must be (n_mfcc, n_windows, 3), got {self.data.shape}")
        if not np.all(np.isfinite(self.data)):
            raise ValueError("feature image contains non-finite values")

    @property
    def shape(self) -> tuple[int, int, int]:
        return self.data.shape


def downmix(left: np.ndarray, right: np.ndarray, sample_rate: int = 48000) -> AudioBuffer:
    """Average two channels into one mono buffer."""
    left = np.asarray(left, dtype=np.float64)
    right = np.asarray(right, dtype=np.float64)
    if left.shape != right.shape:
        from .errors import FormatError

        raise FormatError(f"channel length mismatch: {left.shape} vs {right.shape}")
    return AudioBuffer(samples=(left + right) / 2.0, sample_rate=sample_rate)


def make_window(name: str, n: int) -> np.ndarray:
    """Periodic analysis window of length n."""
    k = np.arange(n)
    if name == "hann":
        return 0.5 - 0.5 * np.cos(2.0 * np.pi * k / n)
    if name == "hamming":
        return 0.54 - 0.46 * np.cos(2.0 * np.pi * k / n)
    if name == "rect":
        return np.ones(n)
    raise ConfigError(f"unsupported window {name!r}")


def frame_segment(seg: np.ndarray, p: MfccParams) -> np.ndarray:
    """Slice a segment into (n_windows, n_fft) analysis frames.

    Centered framing reflects n_fft/2 samples at each edge so that window t
    is centered on sample t*hop of the segment.
    """
    seg = np.asarray(seg, dtype=np.float64)
    if seg.ndim != 1:
        raise ValueError(f"segment must be 1-D, got shape {seg.shape}")
    if p.centered:
        pad = p.n_fft // 2
        if len(seg) < pad + 1:
            raise ValueError(f"segment of {len(seg)} samples too short to reflect-pad by {pad}")
        padded = np.pad(seg, pad, mode="reflect")
    else:
        if len(seg) < p.n_fft:
            raise ValueError(f"segment of {len(seg)} samples shorter than n_fft {p.n_fft}")
        padded = seg
    n_w = p.n_windows(len(seg))
    frames = sliding_window_view(padded, p.n_fft)[:: p.hop][:n_w]
    if frames.shape[0] != n_w:
        raise ValueError(f"segment of {len(seg)} samples yields only {frames.shape[0]} windows")
    return frames


def stft_power(seg: np.ndarray, p: MfccParams = MfccParams()) -> np.ndarray:
    """One-sided power spectrogram, shape (n_fft/2 + 1, n_windows)."""
    frames = frame_segment(seg, p) * make_window(p.window, p.n_fft)
    spectrum = np.fft.rfft(frames, axis=1)
    return (spectrum.real**2 + spectrum.imag**2).T


def _hz_to_mel(freq_hz: np.ndarray) -> np.ndarray:
    f = np.asarray(freq_hz, dtype=np.float64)
    mel = 3.0 * f / 200.0
    over = f >= _MEL_BREAK_HZ
    if np.any(over):
        mel = np.where(
            over,
            _MEL_BREAK + np.log(np.maximum(f, _MEL_BREAK_HZ) / _MEL_BREAK_HZ) / _MEL_LOG_STEP,
            mel,
        )
    return mel


def _mel_to_hz(mel: np.ndarray) -> np.ndarray:
    m = np.asarray(mel, dtype=np.float64)
    hz = 200.0 * m / 3.0
    over = m >= _MEL_BREAK
    if np.any(over):
        hz = np.where(over, _MEL_BREAK_HZ * np.exp(_MEL_LOG_STEP * (m - _MEL_BREAK)), hz)
    return hz


@lru_cache(maxsize=8)
def mel_filterbank(p: MfccParams) -> np.ndarray:
    """Triangular, area-normalized mel filterbank, shape (n_mels, n_bins).

    Band edges are spaced uniformly on the Slaney mel scale between fmin and
    fmax; each triangle is scaled by 2 / (upper_edge - lower_edge) in Hz.
    """
    edges_mel = np.linspace(_hz_to_mel(p.fmin), _hz_to_mel(p.effective_fmax), p.n_mels + 2)
    edges_hz = _mel_to_hz(edges_mel)
    fft_hz = np.arange(p.n_bins) * (p.sample_rate / p.n_fft)

    lower = edges_hz[:-2, None]
    center = edges_hz[1:-1, None]
    upper = edges_hz[2:, None]
    rising = (fft_hz[None, :] - lower) / (center - lower)
    falling = (upper - fft_hz[None, :]) / (upper - center)
    fb = np.maximum(0.0, np.minimum(rising, falling))
    fb *= 2.0 / (upper - lower)
    return fb


def mel_project(power: np.ndarray, p: MfccParams = MfccParams()) -> np.ndarray:
    """Log mel spectrogram: filterbank projection then log(x + floor)."""
    power = np.asarray(power, dtype=np.float64)
    if power.shape[0] != p.n_bins:
        raise ValueError(f"expected {p.n_bins} frequency bins, got {power.shape[0]}")
    return np.log(mel_filterbank(p) @ power + LOG_FLOOR)


@lru_cache(maxsize=8)
def dct_matrix(n_out: int, n_in: int) -> np.ndarray:
    """First n_out rows of the orthonormal DCT-II basis on n_in points."""
    if n_out > n_in:
        raise ConfigError(f"cannot keep {n_out} DCT coefficients from {n_in} inputs")
    k = np.arange(n_out)[:, None]
    n = np.arange(n_in)[None, :]
    basis = np.cos(np.pi * (2 * n + 1) * k / (2 * n_in)) * np.sqrt(2.0 / n_in)
    basis[0] /= np.sqrt(2.0)
    return basis


def dct_cepstrum(logmel: np.ndarray, p: MfccParams = MfccParams()) -> np.ndarray:
    """Orthonormal DCT-II along the mel axis; keeps coefficients 0..n_mfcc-1."""
    logmel = np.asarray(logmel, dtype=np.float64)
    if logmel.shape[0] != p.n_mels:
        raise ValueError(f"expected {p.n_mels} mel bands, got {logmel.shape[0]}")
    return dct_matrix(p.n_mfcc, p.n_mels) @ logmel


def temporal_deltas(mfcc: np.ndarray, half_width: int = 4) -> tuple[np.ndarray, np.ndarray]:
    """First and second temporal derivatives of a (coeffs, windows) matrix.

    Uses the least-squares slope over a (2*half_width + 1)-point window with
    edge replication; the second derivative is the same filter applied to the
    first.
    """
    mfcc = np.asarray(mfcc, dtype=np.float64)
    if mfcc.ndim != 2 or mfcc.shape[1] < 2:
        raise ValueError(f"need a (coeffs, windows>=2) matrix, got shape {mfcc.shape}")
    n = mfcc.shape[1]
    denom = 2 * sum(d * d for d in range(1, half_width + 1))

    def slope(x: np.ndarray) -> np.ndarray:
        # antisymmetric difference form: exactly zero on constant input
        padded = np.pad(x, ((0, 0), (half_width, half_width)), mode="edge")
        acc = np.zeros_like(x)
        for d in range(1, half_width + 1):
            acc += d * (padded[:, half_width + d : half_width + d + n]
                        - padded[:, half_width - d : half_width - d + n])
        return acc / denom

    delta = slope(mfcc)
    return delta, slope(delta)


def extract_features(
    buf: AudioBuffer,
    grid: SegmentGrid,
    i: int,
    p: MfccParams = MfccParams(),
) -> FeatureImage:
    """Feature image for segment i of the buffer.

    Deterministic: the same buffer and parameters give a bit-identical tensor.
    """
    if buf.sample_rate != grid.clock.sample_rate:
        raise ConfigError(
            f"buffer rate {buf.sample_rate} != grid rate {grid.clock.sample_rate}"
        )
    start, end = grid.sample_range(i)
    if end > len(buf.samples):
        raise IndexError(
            f"segment {i} spans samples [{start}, {end}) but buffer has {len(buf.samples)}"
        )
    seg = buf.samples[start:end]
    mfcc = dct_cepstrum(mel_project(stft_power(seg, p), p), p)
    delta, delta2 = temporal_deltas(mfcc)
    return FeatureImage(data=np.stack([mfcc, delta, delta2], axis=-1))
