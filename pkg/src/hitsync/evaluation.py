"""Confusion matrices, adjacency adjustment, and sync-error reports.

The adjacency adjustment reclassifies false positives that sit within a small
index radius of false negatives: overlapping analysis windows smear one
physical event across neighboring indices, so such pairs are detections of
the same event, merely attributed one index off.  Each pair converts one FP
into a TP credit and one FN into a TN credit, conserving the total count.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Mapping, Sequence

from .detectors import DetectionStream
from .sync_engine import SyncVerdict


@dataclass(frozen=True)
class ConfusionMatrix:
    tp: int
    fp: int
    fn: int
    tn: int

    def __post_init__(self) -> None:
        if min(self.tp, self.fp, self.fn, self.tn) < 0:
            raise ValueError(f"negative count in confusion matrix {self}")

    @property
    def total(self) -> int:
        return self.tp + self.fp + self.fn + self.tn

    def as_dict(self) -> dict:
        return {"tp": self.tp, "fp": self.fp, "fn": self.fn, "tn": self.tn}


@dataclass(frozen=True)
class SyncReport:
    """Raw and optionally adjusted counts with headline precision/recall.

    Headline metrics come from the adjusted matrix when one is present,
    otherwise from the raw matrix.  Undefined metrics are None, never 0.
    """

    raw: ConfusionMatrix
    adjusted: ConfusionMatrix | None = None
    pairs_adjusted: int = 0

    @property
    def effective(self) -> ConfusionMatrix:
        return self.adjusted if self.adjusted is not None else self.raw

    @property
    def precision(self) -> float | None:
        return metrics(self.effective)[0]

    @property
    def recall(self) -> float | None:
        return metrics(self.effective)[1]


def _hit_set(pred: DetectionStream | Iterable[int]) -> set[int]:
    if isinstance(pred, DetectionStream):
        return set(pred.hit_indices())
    return {int(i) for i in pred}


def confusion(
    pred: DetectionStream | Iterable[int],
    truth: Iterable[int],
    universe: int,
) -> ConfusionMatrix:
    """Standard counts over indices [0, universe)."""
    pred_set = _hit_set(pred)
    truth_set = {int(i) for i in truth}
    for name, s in (("predicted", pred_set), ("truth", truth_set)):
        out = [i for i in s if not 0 <= i < universe]
        if out:
            raise IndexError(f"{name} indices {sorted(out)[:5]} outside universe of {universe}")
    tp = len(pred_set & truth_set)
    fp = len(pred_set - truth_set)
    fn = len(truth_set - pred_set)
    return ConfusionMatrix(tp=tp, fp=fp, fn=fn, tn=universe - tp - fp - fn)


def adjacent_pairs(
    pred: DetectionStream | Iterable[int],
    truth: Iterable[int],
    radius: int = 1,
) -> list[tuple[int, int]]:
    """Greedy 1:1 pairing of false positives with nearby false negatives.

    False positives are scanned in ascending index order; each takes the
    nearest unpaired false negative within the radius, preferring the earlier
    index on a distance tie.  radius=0 pairs nothing.
    """
    pred_set = _hit_set(pred)
    truth_set = {int(i) for i in truth}
    false_pos = sorted(pred_set - truth_set)
    unpaired = set(truth_set - pred_set)
    pairs: list[tuple[int, int]] = []
    for f in false_pos:
        for d in range(1, radius + 1):
            if f - d in unpaired:
                match = f - d
            elif f + d in unpaired:
                match = f + d
            else:
                continue
            unpaired.remove(match)
            pairs.append((f, match))
            break
    return pairs


def apply_adjustment(cm: ConfusionMatrix, pairs: int) -> ConfusionMatrix:
    """Shift `pairs` FP->TP credits and FN->TN credits; conserves the total."""
    if pairs < 0 or pairs > min(cm.fp, cm.fn):
        raise ValueError(f"cannot adjust {pairs} pairs on {cm}")
    return ConfusionMatrix(tp=cm.tp + pairs, fp=cm.fp - pairs, fn=cm.fn - pairs, tn=cm.tn + pairs)


def adjacency_adjust(
    pred: DetectionStream | Iterable[int],
    truth: Iterable[int],
    universe: int,
    radius: int = 1,
) -> tuple[ConfusionMatrix, int]:
    """Adjusted confusion matrix plus the number of FP/FN pairs credited."""
    raw = confusion(pred, truth, universe)
    pairs = adjacent_pairs(pred, truth, radius)
    return apply_adjustment(raw, len(pairs)), len(pairs)


def metrics(cm: ConfusionMatrix) -> tuple[float | None, float | None]:
    """(precision, recall); a zero denominator yields None, not 0 or NaN."""
    precision = cm.tp / (cm.tp + cm.fp) if cm.tp + cm.fp > 0 else None
    recall = cm.tp / (cm.tp + cm.fn) if cm.tp + cm.fn > 0 else None
    return precision, recall


def sync_error_report(
    verdicts: Sequence[SyncVerdict],
    injected: Mapping[int, int] | None = None,
) -> SyncReport:
    """Score verdicts against the injection ground truth.

    A verdict is a true positive when its detection carried an injected
    offset and was flagged.  The injection map defaults to what the verdicts
    themselves recorded; pass one explicitly to override (e.g. when verdicts
    were loaded from a file written by another run).
    """
    tp = fp = fn = tn = 0
    for v in verdicts:
        positive = (v.detection_index in injected) if injected is not None else (
            v.injected_offset is not None
        )
        if v.flagged:
            tp, fp = (tp + 1, fp) if positive else (tp, fp + 1)
        else:
            fn, tn = (fn + 1, tn) if positive else (fn, tn + 1)
    return SyncReport(raw=ConfusionMatrix(tp=tp, fp=fp, fn=fn, tn=tn))


def _metric_cell(value: float | None) -> float | None:
    return round(value, 6) if value is not None else None


def report_to_dict(report: SyncReport, config: Mapping | None = None) -> dict:
    def matrix_block(cm: ConfusionMatrix) -> dict:
        p, r = metrics(cm)
        return {**cm.as_dict(), "total": cm.total, "precision": _metric_cell(p), "recall": _metric_cell(r)}

    out = {
        "raw": matrix_block(report.raw),
        "adjusted": matrix_block(report.adjusted) if report.adjusted is not None else None,
        "pairs_adjusted": report.pairs_adjusted,
        "precision": _metric_cell(report.precision),
        "recall": _metric_cell(report.recall),
    }
    if config is not None:
        out["config"] = dict(config)
    return out


def write_report(path: str | Path, report: SyncReport, config: Mapping | None = None) -> dict:
    payload = report_to_dict(report, config)
    Path(path).write_text(json.dumps(payload, indent=2) + "\n", encoding="utf-8")
    return payload


def format_table(cm: ConfusionMatrix, title: str = "Confusion matrix") -> str:
    """Plain-text 2x2 table in the conventional positives/negatives layout."""
    rows = [
        ("", "Positives", "Negatives"),
        ("Predicted Positives", str(cm.tp), str(cm.fp)),
        ("Predicted Negatives", str(cm.fn), str(cm.tn)),
    ]
    widths = [max(len(r[c]) for r in rows) for c in range(3)]
    lines = [title]
    for r in rows:
        lines.append("  ".join(cell.rjust(w) for cell, w in zip(r, widths)).rstrip())
    return "\n".join(lines)
