"""Answer confidence versus correctness: buckets, per-label precision and recall."""

from __future__ import annotations

import csv
import enum
import io
from dataclasses import dataclass
from typing import Iterable, Optional, Sequence

from .evaluation import LABEL_ORDER, sample_from_record
from .protocol import Label, Mode, parse_transcript

LOW_THRESHOLD = 0.85
HIGH_THRESHOLD = 0.95


class Bucket(str, enum.Enum):
    LOW = "Low"
    MID = "Mid"
    HIGH = "High"


def bucket_of(p: float) -> Bucket:
    if p < LOW_THRESHOLD:
        return Bucket.LOW
    if p > HIGH_THRESHOLD:
        return Bucket.HIGH
    return Bucket.MID


@dataclass(frozen=True)
class ConfidenceRecord:
    claim_id: str
    pred: Optional[Label]
    gold: Label
    p_label: Optional[float] = None

    @property
    def correct(self) -> bool:
        return self.pred is not None and self.pred == self.gold

    @property
    def bucket(self) -> Optional[Bucket]:
        return None if self.p_label is None else bucket_of(self.p_label)


def records_from_log(rows: Iterable[dict]) -> list[ConfidenceRecord]:
    out = []
    for rec in rows:
        sample = sample_from_record(rec)
        answer = parse_transcript(rec.get("transcript", ""), Mode.LENIENT).answer
        out.append(
            ConfidenceRecord(
                claim_id=sample.claim_id,
                pred=answer.label if answer else None,
                gold=sample.gold_label,
                p_label=rec.get("answer_probability"),
            )
        )
    return out


def bucket_records(records: Sequence[ConfidenceRecord]) -> dict:
    """Count and accuracy for every (gold label, bucket) cell.

    Records without a probability are excluded and counted under ``excluded``.
    """
    usable = [r for r in records if r.p_label is not None]
    cells = []
    for lab in LABEL_ORDER:
        for b in Bucket:
            group = [r for r in usable if r.gold is lab and r.bucket is b]
            correct = sum(r.correct for r in group)
            cells.append(
                {
                    "gold_label": lab.name,
                    "bucket": b.value,
                    "count": len(group),
                    "correct": correct,
                    "accuracy": correct / len(group) if group else None,
                }
            )
    return {
        "thresholds": {"low_below": LOW_THRESHOLD, "high_above": HIGH_THRESHOLD},
        "probability_convention": "first token of label word",
        "excluded": len(records) - len(usable),
        "cells": cells,
    }


def precision_recall(records: Sequence[ConfidenceRecord]) -> dict:
    """One-vs-rest precision and recall per label; empty denominators give ``None``."""
    if not records:
        raise ValueError("precision_recall needs at least one record")
    out = {}
    for lab in LABEL_ORDER:
        tp = sum(1 for r in records if r.pred is lab and r.gold is lab)
        predicted = sum(1 for r in records if r.pred is lab)
        actual = sum(1 for r in records if r.gold is lab)
        out[lab.name] = {
            "precision": tp / predicted if predicted else None,
            "recall": tp / actual if actual else None,
            "support": actual,
            "predicted": predicted,
        }
    return out


def micro_recall(records: Sequence[ConfidenceRecord]) -> float:
    return sum(r.correct for r in records) / len(records)


def tables_to_csv(buckets: dict, pr: dict) -> tuple[str, str]:
    b = io.StringIO()
    w = csv.writer(b, lineterminator="\n")
    w.writerow(["gold_label", "bucket", "count", "correct", "accuracy"])
    for c in buckets["cells"]:
        w.writerow([c["gold_label"], c["bucket"], c["count"], c["correct"], "" if c["accuracy"] is None else c["accuracy"]])
    p = io.StringIO()
    w = csv.writer(p, lineterminator="\n")
    w.writerow(["label", "precision", "recall", "support", "predicted"])
    for lab, v in pr.items():
        w.writerow([lab, "" if v["precision"] is None else v["precision"], "" if v["recall"] is None else v["recall"], v["support"], v["predicted"]])
    return b.getvalue(), p.getvalue()
