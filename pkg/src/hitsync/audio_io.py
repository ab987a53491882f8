"""WAV ingestion and binary feature dumps.

Accepted WAV encodings: PCM 16/24/32-bit integer and 32/64-bit float, at the
expected sample rate only (no resampling).  Stereo is downmixed to mono by
averaging; more than two channels is rejected.

Feature dump layout: three little-endian uint32 (n_mfcc, n_windows, channels)
followed by one row-major float32 record per segment, plus a JSON manifest
listing segment index, start sample and label for each record.
"""

from __future__ import annotations

import json
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np
from scipy.io import wavfile

from .audio_features import AudioBuffer, downmix
from .errors import FormatError

_PCM_SCALE = {
    np.dtype(np.int16): 2.0**15,
    np.dtype(np.int32): 2.0**31,  # scipy widens 24-bit PCM into int32
}

_DUMP_HEADER_DTYPE = "<u4"


def load_wav(path: str | Path, expected_rate: int = 48000) -> AudioBuffer:
    """Read a WAV file into a mono float buffer at the expected rate."""
    path = Path(path)
    try:
        rate, data = wavfile.read(path)
    except ValueError as exc:
        raise FormatError(f"{path}: not a readable WAV file ({exc})") from None
    if rate != expected_rate:
        raise FormatError(f"{path}: sample rate {rate} Hz; this pipeline requires {expected_rate} Hz")

    if data.dtype in _PCM_SCALE:
        samples = data.astype(np.float64) / _PCM_SCALE[data.dtype]
    elif data.dtype in (np.float32, np.float64):
        samples = data.astype(np.float64)
    else:
        raise FormatError(f"{path}: unsupported WAV encoding {data.dtype}")

    if samples.ndim == 1:
        return AudioBuffer(samples=samples, sample_rate=rate)
    if samples.ndim == 2 and samples.shape[1] == 2:
        return downmix(samples[:, 0], samples[:, 1], sample_rate=rate)
    raise FormatError(f"{path}: expected mono or stereo, got shape {samples.shape}")


def save_wav(path: str | Path, buf: AudioBuffer) -> None:
    """Write a buffer as 32-bit float WAV."""
    wavfile.write(Path(path), buf.sample_rate, buf.samples.astype(np.float32))


def write_feature_dump(
    bin_path: str | Path,
    manifest_path: str | Path,
    images: Iterable[np.ndarray],
    records: Sequence[dict],
) -> int:
    """Write feature records and their manifest; returns the record count."""
    bin_path, manifest_path = Path(bin_path), Path(manifest_path)
    shape: tuple[int, ...] | None = None
    count = 0
    with bin_path.open("wb") as fh:
        for image in images:
            arr = np.ascontiguousarray(image, dtype="<f4")
            if shape is None:
                shape = arr.shape
                fh.write(np.asarray(shape, dtype=_DUMP_HEADER_DTYPE).tobytes())
            elif arr.shape != shape:
                raise ValueError(f"inconsistent record shapes: {arr.shape} vs {shape}")
            fh.write(arr.tobytes())
            count += 1
    if shape is None:
        shape = (0, 0, 0)
        with bin_path.open("wb") as fh:
            fh.write(np.asarray(shape, dtype=_DUMP_HEADER_DTYPE).tobytes())
    if count != len(records):
        raise ValueError(f"{count} records written but {len(records)} manifest entries given")
    manifest = {
        "shape": list(shape),
        "dtype": "float32",
        "byte_order": "little",
        "count": count,
        "records": list(records),
    }
    manifest_path.write_text(json.dumps(manifest, indent=2) + "\n", encoding="utf-8")
    return count


def read_feature_dump(bin_path: str | Path) -> np.ndarray:
    """Read a feature dump back as an (n_records, *shape) float32 array."""
    raw = Path(bin_path).read_bytes()
    header = np.frombuffer(raw, dtype=_DUMP_HEADER_DTYPE, count=3)
    shape = tuple(int(x) for x in header)
    body = np.frombuffer(raw, dtype="<f4", offset=12)
    per_record = int(np.prod(shape)) if all(shape) else 0
    if per_record == 0:
        return body.reshape((0, *shape))
    if body.size % per_record != 0:
        raise FormatError(f"{bin_path}: byte count does not match record shape {shape}")
    return body.reshape((-1, *shape))
