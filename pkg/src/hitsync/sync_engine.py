"""Cross-stream verification: for each audio-detected hit, search the video
neighborhood for a matching hit and flag a sync error if none is found.

The default search policy queries three non-overlapping 3-frame blocks at
offsets -6, -3 and 0 from the detection index, covering 240 ms before the
detection instant through 80 ms after it.

Sign convention for injected offsets: a positive offset shifts the queried
video block indices forward, modeling video content that runs early relative
to the audio.  With a true hit at frame h and a detection at index h, the hit
stays inside the searched span for offsets in [-(block_len-1) - max_offset,
-min_offset] = [-2, +6] at defaults; anything outside is detectable.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Mapping

import numpy as np

from .detectors import DetectionStream, StreamKind
from .errors import ConfigError


@dataclass(frozen=True)
class SearchPolicy:
    """Video search geometry relative to an audio detection index."""

    block_offsets: tuple[int, ...] = (-6, -3, 0)
    block_len: int = 3

    def __post_init__(self) -> None:
        if self.block_len <= 0:
            raise ConfigError("block_len must be positive")
        if not self.block_offsets:
            raise ConfigError("need at least one block offset")
        offs = sorted(self.block_offsets)
        if any(b - a != self.block_len for a, b in zip(offs, offs[1:])):
            raise ConfigError(
                f"block offsets {self.block_offsets} must be consecutive and "
                f"non-overlapping (spaced by block_len={self.block_len})"
            )

    def detectable_offsets(self) -> frozenset[int]:
        """Injected offsets under which a hit at the detection index is still
        covered by some queried block (derived from the block geometry)."""
        out: set[int] = set()
        for q in self.block_offsets:
            out.update(range(-q - self.block_len + 1, -q + 1))
        return frozenset(out)


@dataclass(frozen=True)
class OffsetSpec:
    """Fault-injection model: which offsets may be drawn, and how often."""

    lo: int = -15
    hi: int = 15
    excluded: tuple[int, int] = (-3, 6)
    fraction_offset: float = 0.5
    seed: int | None = None

    def __post_init__(self) -> None:
        if self.lo > self.hi:
            raise ConfigError(f"offset range [{self.lo}, {self.hi}] is empty")
        ex_lo, ex_hi = self.excluded
        if ex_lo > ex_hi or ex_lo < self.lo or ex_hi > self.hi:
            raise ConfigError(
                f"excluded range [{ex_lo}, {ex_hi}] must be a non-empty subrange "
                f"of [{self.lo}, {self.hi}]"
            )
        if not 0.0 <= self.fraction_offset <= 1.0:
            raise ConfigError("fraction_offset must lie in [0, 1]")

    def allowed_offsets(self) -> tuple[int, ...]:
        ex_lo, ex_hi = self.excluded
        return tuple(o for o in range(self.lo, self.hi + 1) if not ex_lo <= o <= ex_hi)


@dataclass(frozen=True)
class SyncVerdict:
    """Outcome of verifying one audio detection against the video stream."""

    detection_index: int
    blocks_queried: tuple[int, ...]
    blocks_dropped: int
    any_video_hit: bool
    flagged: bool
    injected_offset: int | None = None

    def to_dict(self) -> dict:
        return {
            "detection_index": self.detection_index,
            "blocks_queried": list(self.blocks_queried),
            "blocks_dropped": self.blocks_dropped,
            "any_video_hit": self.any_video_hit,
            "flagged": self.flagged,
            "injected_offset": self.injected_offset,
        }


def query_blocks(i: int, policy: SearchPolicy, total_frames: int) -> list[int]:
    """Block start frames to query for detection index i.

    Blocks falling even partly outside [0, total_frames) are dropped.
    """
    starts = [i + o for o in policy.block_offsets]
    return [s for s in starts if s >= 0 and s + policy.block_len <= total_frames]


def verify_detection(
    i: int,
    video: DetectionStream,
    policy: SearchPolicy,
    total_frames: int,
    offset: int | None = None,
) -> SyncVerdict:
    """Search the video neighborhood of detection i; flag if no hit is found.

    `offset` is the injected desync in frames (None = genuine, as-is
    streams); it shifts every queried block index.  A detection whose whole
    search window falls outside the video is flagged, conservatively.
    """
    if video.kind is not StreamKind.VIDEO_BLOCK:
        raise ValueError(f"expected a video-block stream, got {video.kind.value}")
    shift = offset or 0
    queried = query_blocks(i + shift, policy, total_frames)
    any_hit = any(video.is_hit(b) for b in queried)
    return SyncVerdict(
        detection_index=i,
        blocks_queried=tuple(queried),
        blocks_dropped=len(policy.block_offsets) - len(queried),
        any_video_hit=any_hit,
        flagged=not any_hit,
        injected_offset=offset,
    )


def inject_offsets(detections: DetectionStream, spec: OffsetSpec) -> dict[int, int]:
    """Assign a random offset to a fraction of the detections.

    Each detection is independently selected with probability
    `fraction_offset`; selected ones draw uniformly from the allowed offset
    set.  Deterministic given the spec seed (detections are visited in
    ascending index order).  Unselected detections are absent from the map.
    """
    allowed = spec.allowed_offsets()
    if not allowed:
        raise ConfigError("offset spec excludes every offset; nothing to inject")
    if spec.seed is None:
        raise ConfigError("offset injection is stochastic; OffsetSpec.seed is required")
    indices = detections.hit_indices()
    rng = np.random.default_rng(spec.seed)
    selected = rng.random(len(indices)) < spec.fraction_offset
    draws = rng.choice(allowed, size=int(selected.sum()))
    out: dict[int, int] = {}
    it = iter(draws)
    for idx, sel in zip(indices, selected):
        if sel:
            out[idx] = int(next(it))
    return out


def run_sync_detection(
    audio: DetectionStream,
    video: DetectionStream,
    policy: SearchPolicy,
    total_frames: int,
    offsets: Mapping[int, int] | None = None,
) -> list[SyncVerdict]:
    """One verdict per audio detection, in ascending index order."""
    if audio.kind is not StreamKind.AUDIO_SEGMENT:
        raise ValueError(f"expected an audio-segment stream, got {audio.kind.value}")
    offsets = offsets or {}
    return [
        verify_detection(i, video, policy, total_frames, offset=offsets.get(i))
        for i in audio.hit_indices()
    ]


def write_verdicts(path: str | Path, verdicts: list[SyncVerdict]) -> None:
    """Write verdicts as JSON-lines with a trailing summary object."""
    summary = {
        "summary": {
            "verdicts": len(verdicts),
            "flagged": sum(v.flagged for v in verdicts),
            "injected": sum(v.injected_offset is not None for v in verdicts),
        }
    }
    with Path(path).open("w", encoding="utf-8") as fh:
        for v in verdicts:
            fh.write(json.dumps(v.to_dict()) + "\n")
        fh.write(json.dumps(summary) + "\n")
