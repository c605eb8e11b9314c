"""Joint / verification / label accuracy, evidence score and cover rate."""

from __future__ import annotations

import json
from fractions import Fraction
from dataclasses import dataclass, field
from typing import Iterable, Optional, Sequence

from .data import ClaimSample, iter_jsonl
from .protocol import Label, Mode, ParsedAnswer, parse_transcript
from .reward import GoldAnnotation, evidence_reward

METRICS = ("joint_acc", "veri_acc", "label_acc", "evidence_score", "cover_rate")
LABEL_ORDER = (Label.SUPPORT, Label.REFUTE, Label.NEI)


@dataclass(frozen=True)
class SampleScore:
    joint_correct: bool
    veri_correct: bool
    label_correct: bool
    evidence_score: float
    covers_all_gold: bool
    dataset: str = "default"
    gold_label: Label = Label.SUPPORT


def score_sample(
    pred: Optional[ParsedAnswer], gold: GoldAnnotation, relax_nei: bool = True, dataset: str = "default"
) -> SampleScore:
    """Score one prediction.

    Verification accuracy allows redundant evidence (gold must be a subset);
    joint accuracy needs the exact gold set. With ``relax_nei`` both evidence
    conditions are waived for NEI golds.
    """
    if pred is None:
        return SampleScore(False, False, False, 0.0, False, dataset, gold.label)
    label_ok = pred.label == gold.label
    relaxed = relax_nei and gold.label is Label.NEI
    covers = gold.evidence <= pred.evidence
    veri = label_ok and (covers or relaxed)
    joint = label_ok and (pred.evidence == gold.evidence or relaxed)
    return SampleScore(joint, veri, label_ok, evidence_reward(pred.evidence, gold.evidence), covers, dataset, gold.label)


@dataclass
class GroupMetrics:
    count: int
    joint_acc: float
    veri_acc: float
    label_acc: float
    evidence_score: float
    cover_rate: float

    def to_dict(self) -> dict:
        return {"count": self.count, **{m: getattr(self, m) for m in METRICS}}


def _mean(values: Iterable[float]) -> float:
    # exact sum, one rounding: independent of sample order
    vals = [Fraction(v) for v in values]
    return float(sum(vals, Fraction(0)) / len(vals))


def _metrics(scores: Sequence[SampleScore]) -> GroupMetrics:
    return GroupMetrics(
        count=len(scores),
        joint_acc=_mean(s.joint_correct for s in scores),
        veri_acc=_mean(s.veri_correct for s in scores),
        label_acc=_mean(s.label_correct for s in scores),
        evidence_score=_mean(s.evidence_score for s in scores),
        cover_rate=_mean(s.covers_all_gold for s in scores),
    )


@dataclass
class EvaluationReport:
    overall: Optional[GroupMetrics]
    by_dataset: dict[str, GroupMetrics]
    by_label: dict[str, GroupMetrics]
    by_dataset_label: dict[str, dict[str, GroupMetrics]]
    relax_nei: bool = True
    notes: list[str] = field(default_factory=list)

    def groups(self) -> Iterable[tuple[str, GroupMetrics]]:
        if self.overall is not None:
            yield "overall", self.overall
        for k, g in self.by_dataset.items():
            yield f"dataset={k}", g
        for k, g in self.by_label.items():
            yield f"label={k}", g
        for d, per in self.by_dataset_label.items():
            for k, g in per.items():
                yield f"dataset={d}/label={k}", g

    def to_dict(self) -> dict:
        return {
            "relax_nei": self.relax_nei,
            "averaging": "micro (assumes label-balanced datasets)",
            "overall": self.overall.to_dict() if self.overall else None,
            "by_dataset": {k: g.to_dict() for k, g in self.by_dataset.items()},
            "by_label": {k: g.to_dict() for k, g in self.by_label.items()},
            "by_dataset_label": {d: {k: g.to_dict() for k, g in per.items()} for d, per in self.by_dataset_label.items()},
            "notes": list(self.notes),
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"

    def to_table(self) -> str:
        header = ("Group", "N", "Joint Acc", "Veri Acc", "Label Acc", "Evid Score", "Cover Rate")
        rows = [header]
        for name, g in self.groups():
            rows.append(
                (
                    name,
                    str(g.count),
                    f"{100 * g.joint_acc:.2f}%",
                    f"{100 * g.veri_acc:.2f}%",
                    f"{100 * g.label_acc:.2f}%",
                    f"{g.evidence_score:.4f}",
                    f"{100 * g.cover_rate:.2f}%",
                )
            )
        widths = [max(len(r[i]) for r in rows) for i in range(len(header))]
        lines = []
        for n, r in enumerate(rows):
            cells = [r[0].ljust(widths[0])] + [c.rjust(w) for c, w in zip(r[1:], widths[1:])]
            lines.append("  ".join(cells).rstrip())
            if n == 0:
                lines.append("  ".join("-" * w for w in widths))
        if not self.relax_nei:
            lines.append("NEI evidence relaxation disabled")
        lines.extend(f"note: {n}" for n in self.notes)
        return "\n".join(lines) + "\n"


def _label_key(label: Label) -> str:
    return label.name


def aggregate(scores: Sequence[SampleScore], relax_nei: bool = True, notes: Sequence[str] = ()) -> EvaluationReport:
    """Means per dataset, per gold label and per (dataset, label); empty groups are left out."""
    datasets = sorted({s.dataset for s in scores})
    by_label = {}
    for lab in LABEL_ORDER:
        group = [s for s in scores if s.gold_label is lab]
        if group:
            by_label[_label_key(lab)] = _metrics(group)
    by_dataset = {}
    by_dataset_label = {}
    for d in datasets:
        ds = [s for s in scores if s.dataset == d]
        by_dataset[d] = _metrics(ds)
        per = {}
        for lab in LABEL_ORDER:
            group = [s for s in ds if s.gold_label is lab]
            if group:
                per[_label_key(lab)] = _metrics(group)
        by_dataset_label[d] = per
    return EvaluationReport(
        overall=_metrics(scores) if scores else None,
        by_dataset=by_dataset,
        by_label=by_label,
        by_dataset_label=by_dataset_label,
        relax_nei=relax_nei,
        notes=list(notes),
    )


def sample_from_record(rec: dict) -> ClaimSample:
    return ClaimSample.from_dict(
        {
            "claim_id": rec["claim_id"],
            "claim": rec.get("claim", ""),
            "gold_label": rec.get("gold_label_raw") or rec["gold_label"],
            "gold_evidence": rec.get("gold_evidence", []),
            "dataset": rec.get("dataset"),
        }
    )


def score_records(records: Iterable[dict], relax_nei: bool = True) -> tuple[list[SampleScore], list[str]]:
    """Re-parse each logged transcript leniently and score it against its gold."""
    scores = []
    remapped: dict[str, set[str]] = {}
    for rec in records:
        sample = sample_from_record(rec)
        traj = parse_transcript(rec.get("transcript", ""), Mode.LENIENT, claim=sample.claim)
        scores.append(score_sample(traj.answer, sample.gold, relax_nei=relax_nei, dataset=sample.dataset))
        if sample.label_remapped:
            remapped.setdefault(sample.dataset, set()).add(f"{sample.label_raw} -> {sample.gold_label.value}")
    notes = [f"dataset {d}: gold label {m} for scoring" for d in sorted(remapped) for m in sorted(remapped[d])]
    return scores, notes


def evaluate_log(path, relax_nei: bool = True) -> EvaluationReport:
    scores, notes = score_records(iter_jsonl(path), relax_nei=relax_nei)
    return aggregate(scores, relax_nei=relax_nei, notes=notes)
