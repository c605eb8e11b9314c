"""Composite trajectory reward: format, evidence Jaccard, label, validity weight."""

from __future__ import annotations

from dataclasses import asdict, dataclass
from typing import AbstractSet, Optional

from .protocol import FormatVerdict, Label, Trajectory, validate_format


@dataclass(frozen=True)
class GoldAnnotation:
    label: Label
    evidence: frozenset[str] = frozenset()


@dataclass(frozen=True)
class RewardBreakdown:
    r_format: int
    r_evidence: float
    r_label: int
    hit_rate: float
    w_validity: float
    r_final: float

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "RewardBreakdown":
        return cls(**{k: d[k] for k in cls.__dataclass_fields__})

    @classmethod
    def zero(cls, gold: Optional[GoldAnnotation] = None) -> "RewardBreakdown":
        """All-zero breakdown used for failed episodes."""
        h = 1.0 if gold is not None and not gold.evidence else 0.0
        return cls(0, 0.0, 0, h, 0.0, 0.0)


def format_reward(verdict: FormatVerdict) -> int:
    return 1 if verdict.ok else 0


def evidence_reward(pred: AbstractSet[str], gold: AbstractSet[str]) -> float:
    """Jaccard similarity of evidence-id sets; two empty sets score 1.0."""
    union = len(pred | gold)
    if union == 0:
        return 1.0
    return len(pred & gold) / union


def label_reward(pred: Optional[Label], gold: Label) -> int:
    return 2 if pred is not None and pred == gold else 0


def hit_rate(pred: AbstractSet[str], gold: AbstractSet[str]) -> float:
    if not gold:
        return 1.0
    return len(pred & gold) / len(gold)


def validity_weight(
    gold_label: Label, pred_evidence: AbstractSet[str], gold_evidence: AbstractSet[str]
) -> tuple[float, float]:
    """Return ``(w_validity, h)``.

    NEI golds always get full weight. For SUPPORT/REFUTE the weight is 1 when
    every gold id is hit, 0.5 when strictly more than half are, else 0.
    """
    h = hit_rate(pred_evidence, gold_evidence)
    if gold_label is Label.NEI or h == 1.0:
        return 1.0, h
    if h > 0.5:
        return 0.5, h
    return 0.0, h


def combine(r_label: int, w_validity: float, r_evidence: float, r_format: int) -> float:
    return r_label * w_validity + r_evidence + r_format


def final_reward(
    t: Trajectory, gold: GoldAnnotation, verdict: Optional[FormatVerdict] = None, require_plan: bool = True
) -> RewardBreakdown:
    if verdict is None:
        verdict = validate_format(t, require_plan=require_plan)
    pred_label = t.answer.label if t.answer is not None else None
    pred_ev = t.answer.evidence if t.answer is not None else frozenset()
    r_format = format_reward(verdict)
    r_evidence = evidence_reward(pred_ev, gold.evidence)
    r_label = label_reward(pred_label, gold.label)
    w, h = validity_weight(gold.label, pred_ev, gold.evidence)
    return RewardBreakdown(
        r_format=r_format,
        r_evidence=r_evidence,
        r_label=r_label,
        hit_rate=h,
        w_validity=w,
        r_final=combine(r_label, w, r_evidence, r_format),
    )
