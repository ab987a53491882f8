"""Shared clock model linking video frames, 3-frame blocks, audio samples and
160 ms audio segments, plus the per-frame event-label vocabulary.

All indexing is zero-based.  The segment stride equals the number of audio
samples per video frame, so audio-segment index i and video frame index i
start at the same instant and the two streams share one index space.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass
from enum import Enum
from pathlib import Path
from typing import Iterable, Sequence

from .errors import ConfigError, FormatError


class EventLabel(Enum):
    """Per-frame event vocabulary: a racquet hit, a ball bounce, or neither."""

    HIT = "hit"
    BOUNCE = "bounce"
    NEITHER = "neither"

    @classmethod
    def parse(cls, text: str) -> "EventLabel":
        try:
            return cls(text.strip().lower())
        except ValueError:
            raise FormatError(
                f"unknown event label {text!r}; expected one of: hit, bounce, neither"
            ) from None


@dataclass(frozen=True)
class ClockSpec:
    """Video frame rate and audio sample rate with integer samples per frame."""

    fps: int = 25
    sample_rate: int = 48000

    def __post_init__(self) -> None:
        if self.fps <= 0 or self.sample_rate <= 0:
            raise ConfigError("fps and sample_rate must be positive")
        if self.sample_rate % self.fps != 0:
            raise ConfigError(
                f"sample_rate {self.sample_rate} is not divisible by fps {self.fps}; "
                "the segment grid needs an integer number of samples per frame"
            )

    @property
    def samples_per_frame(self) -> int:
        return self.sample_rate // self.fps

    def frame_start_sample(self, frame: int) -> int:
        return frame * self.samples_per_frame


@dataclass(frozen=True)
class LabelTrack:
    """One EventLabel per video frame, on the given clock."""

    clock: ClockSpec
    labels: tuple[EventLabel, ...]

    def __len__(self) -> int:
        return len(self.labels)

    def label_at(self, frame: int) -> EventLabel:
        if not 0 <= frame < len(self.labels):
            raise IndexError(f"frame {frame} outside track of {len(self.labels)} frames")
        return self.labels[frame]

    def frames_with(self, label: EventLabel) -> list[int]:
        return [i for i, lab in enumerate(self.labels) if lab is label]


@dataclass(frozen=True)
class SegmentGrid:
    """Audio segment grid: fixed-length windows starting at frame boundaries.

    Segment i covers samples [i*stride, i*stride + segment_len).  Segments
    whose tail would overrun the audio buffer are not part of the grid (no
    padding), so the last few frames of a stream have no segment.
    """

    clock: ClockSpec = ClockSpec()
    segment_len: int = 7680
    stride: int = 1920

    def __post_init__(self) -> None:
        if self.segment_len <= 0 or self.stride <= 0:
            raise ConfigError("segment_len and stride must be positive")
        if self.stride != self.clock.samples_per_frame:
            raise ConfigError(
                f"stride {self.stride} must equal samples per frame "
                f"{self.clock.samples_per_frame} so segments align with frames"
            )
        if self.segment_len < self.stride:
            raise ConfigError("segment_len must be at least one stride")

    def n_segments(self, total_samples: int) -> int:
        """Number of segments fully contained in a buffer of total_samples."""
        if total_samples < self.segment_len:
            return 0
        return (total_samples - self.segment_len) // self.stride + 1

    def sample_range(self, i: int) -> tuple[int, int]:
        """Half-open sample interval [start, end) of segment i."""
        if i < 0:
            raise IndexError(f"segment index {i} is negative")
        start = i * self.stride
        return start, start + self.segment_len


@dataclass(frozen=True)
class BlockSpec:
    """A group of consecutive video frames treated as one unit.

    The block carries the label of its first frame.
    """

    start_frame: int
    length: int = 3

    def frames(self) -> list[int]:
        return list(range(self.start_frame, self.start_frame + self.length))


def block_frames(b: BlockSpec) -> list[int]:
    """Frame indices covered by a block; negative starts are returned as-is
    and must be clamped or skipped by the consumer."""
    return b.frames()


def segment_label(track: LabelTrack, grid: SegmentGrid, i: int) -> EventLabel:
    """Label of segment i: the label of the frame that marks its beginning.

    The grid argument makes the segment->frame identity explicit; with the
    grid invariants (stride == samples per frame) segment i begins exactly
    at frame i.
    """
    if not 0 <= i < len(track.labels):
        raise IndexError(f"segment {i} has no labeled frame (track has {len(track.labels)})")
    return track.labels[i]


def usable_segments(track: LabelTrack, grid: SegmentGrid, total_samples: int) -> int:
    """Segments that both fit in the audio buffer and have a labeled frame."""
    return min(len(track.labels), grid.n_segments(total_samples))


def hit_covering_blocks(
    track: LabelTrack,
    target: EventLabel = EventLabel.HIT,
    block_len: int = 3,
) -> frozenset[int]:
    """Start frames of every block whose span contains a target-labeled frame.

    Only blocks fully inside the track are considered.  This is the ideal
    per-block detector truth: a detector inspecting frames [b, b+block_len)
    should fire iff one of those frames carries the event.
    """
    n = len(track.labels)
    starts: set[int] = set()
    for f in track.frames_with(target):
        lo = max(0, f - block_len + 1)
        hi = min(f, n - block_len)
        starts.update(range(lo, hi + 1))
    return frozenset(starts)


_LABEL_COLUMNS = ["frame", "label"]


def read_label_track(path: str | Path, clock: ClockSpec = ClockSpec()) -> LabelTrack:
    """Read a label track from JSON-lines or CSV.

    JSONL: one object per line, {"frame": int, "label": "hit"|"bounce"|"neither"}.
    CSV: header `frame,label`, then one row per frame.
    Frames must be contiguous from 0 in both formats.
    """
    path = Path(path)
    with path.open("r", encoding="utf-8") as fh:
        first = fh.readline()
        if not first.strip():
            raise FormatError(f"{path}: empty label file")
        fh.seek(0)
        if first.lstrip().startswith("{"):
            labels = _read_labels_jsonl(fh, path)
        elif first.strip().lower().replace(" ", "") == "frame,label":
            labels = _read_labels_csv(fh, path)
        else:
            raise FormatError(
                f"{path}: unrecognized label file; expected JSONL records or a "
                "CSV with header 'frame,label'"
            )
    return LabelTrack(clock=clock, labels=tuple(labels))


def _read_labels_jsonl(fh, path: Path) -> list[EventLabel]:
    labels: list[EventLabel] = []
    for lineno, line in enumerate(fh, start=1):
        if not line.strip():
            continue
        try:
            rec = json.loads(line)
        except json.JSONDecodeError as exc:
            raise FormatError(f"{path}: line {lineno}: invalid JSON ({exc.msg})") from None
        if not isinstance(rec, dict) or "frame" not in rec or "label" not in rec:
            raise FormatError(f"{path}: line {lineno}: expected keys 'frame' and 'label'")
        if rec["frame"] != len(labels):
            raise FormatError(
                f"{path}: line {lineno}: frame {rec['frame']} out of order; "
                f"expected {len(labels)} (frames must be contiguous from 0)"
            )
        labels.append(EventLabel.parse(str(rec["label"])))
    return labels


def _read_labels_csv(fh, path: Path) -> list[EventLabel]:
    reader = csv.reader(fh)
    header = next(reader)
    if [c.strip().lower() for c in header] != _LABEL_COLUMNS:
        raise FormatError(f"{path}: line 1: expected CSV header 'frame,label'")
    labels: list[EventLabel] = []
    for lineno, row in enumerate(reader, start=2):
        if not row:
            continue
        if len(row) != 2:
            raise FormatError(f"{path}: line {lineno}: expected two columns, got {len(row)}")
        try:
            frame = int(row[0])
        except ValueError:
            raise FormatError(f"{path}: line {lineno}: bad frame index {row[0]!r}") from None
        if frame != len(labels):
            raise FormatError(
                f"{path}: line {lineno}: frame {frame} out of order; "
                f"expected {len(labels)} (frames must be contiguous from 0)"
            )
        labels.append(EventLabel.parse(row[1]))
    return labels


def write_label_track(path: str | Path, track: LabelTrack) -> None:
    """Write a label track as JSON-lines."""
    with Path(path).open("w", encoding="utf-8") as fh:
        for frame, label in enumerate(track.labels):
            fh.write(json.dumps({"frame": frame, "label": label.value}) + "\n")


def label_track_from(
    n_frames: int,
    hits: Iterable[int] = (),
    bounces: Iterable[int] = (),
    clock: ClockSpec = ClockSpec(),
) -> LabelTrack:
    """Build a track that is NEITHER everywhere except the given event frames."""
    labels = [EventLabel.NEITHER] * n_frames
    for f in hits:
        labels[f] = EventLabel.HIT
    for f in bounces:
        if labels[f] is EventLabel.HIT:
            raise ConfigError(f"frame {f} is both a hit and a bounce")
        labels[f] = EventLabel.BOUNCE
    return LabelTrack(clock=clock, labels=tuple(labels))
