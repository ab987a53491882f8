"""Audio/video sync-error detection by correlating impact events across streams."""

from .audio_features import AudioBuffer, FeatureImage, MfccParams, extract_features
from .detectors import (
    DetectionStream,
    DetectorQuality,
    StreamKind,
    dsp_aed,
    load_scores,
    oracle_detector,
)
from .errors import ConfigError, FormatError
from .evaluation import ConfusionMatrix, SyncReport, adjacency_adjust, confusion, metrics
from .sync_engine import (
    OffsetSpec,
    SearchPolicy,
    SyncVerdict,
    inject_offsets,
    run_sync_detection,
    verify_detection,
)
from .synth import SynthSpec, generate, make_rally
from .timeline import ClockSpec, EventLabel, LabelTrack, SegmentGrid, segment_label

__version__ = "0.1.0"

__all__ = [
    "AudioBuffer",
    "ClockSpec",
    "ConfigError",
    "ConfusionMatrix",
    "DetectionStream",
    "DetectorQuality",
    "EventLabel",
    "FeatureImage",
    "FormatError",
    "LabelTrack",
    "MfccParams",
    "OffsetSpec",
    "SearchPolicy",
    "SegmentGrid",
    "StreamKind",
    "SyncReport",
    "SyncVerdict",
    "SynthSpec",
    "adjacency_adjust",
    "confusion",
    "dsp_aed",
    "extract_features",
    "generate",
    "inject_offsets",
    "load_scores",
    "make_rally",
    "metrics",
    "oracle_detector",
    "run_sync_detection",
    "segment_label",
    "verify_detection",
]
