"""Claim datasets (JSONL) and gold-label mapping."""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Iterator, Optional

from .protocol import Label
from .reward import GoldAnnotation

# Two-way datasets (HOVER) use NOT SUPPORTED for the negative class; scored as REFUTE.
_DATASET_LABEL_OVERRIDES = {
    "NOT SUPPORTED": Label.REFUTE,
}


def parse_gold_label(text: str) -> Label:
    key = " ".join(text.replace("_", " ").split()).upper()
    if key in _DATASET_LABEL_OVERRIDES:
        return _DATASET_LABEL_OVERRIDES[key]
    return Label.parse(text)


@dataclass(frozen=True)
class ClaimSample:
    claim_id: str
    claim: str
    gold_label: Label
    gold_evidence: frozenset[str] = frozenset()
    dataset: str = "default"
    label_raw: Optional[str] = None

    @property
    def gold(self) -> GoldAnnotation:
        return GoldAnnotation(self.gold_label, self.gold_evidence)

    @property
    def label_remapped(self) -> bool:
        return self.label_raw is not None and _label_or_none(self.label_raw) != self.gold_label

    @classmethod
    def from_dict(cls, d: dict) -> "ClaimSample":
        raw = str(d["gold_label"])
        return cls(
            claim_id=str(d["claim_id"]),
            claim=str(d["claim"]),
            gold_label=parse_gold_label(raw),
            gold_evidence=frozenset(d.get("gold_evidence") or ()),
            dataset=str(d.get("dataset") or "default"),
            label_raw=raw,
        )

    def to_dict(self) -> dict:
        return {
            "claim_id": self.claim_id,
            "claim": self.claim,
            "gold_label": self.label_raw if self.label_raw is not None else self.gold_label.value,
            "gold_evidence": sorted(self.gold_evidence),
            "dataset": self.dataset,
        }


def _label_or_none(text: str) -> Optional[Label]:
    try:
        return Label.parse(text)
    except ValueError:
        return None


def iter_jsonl(path: str | Path) -> Iterator[dict]:
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.strip()
            if not line:
                continue
            try:
                yield json.loads(line)
            except json.JSONDecodeError as exc:
                raise ValueError(f"{path}:{lineno}: invalid JSON ({exc.msg})") from None


def load_dataset(path: str | Path) -> list[ClaimSample]:
    samples = [ClaimSample.from_dict(d) for d in iter_jsonl(path)]
    ids = [s.claim_id for s in samples]
    if len(set(ids)) != len(ids):
        raise ValueError(f"{path}: duplicate claim_id")
    return samples


def write_jsonl(path: str | Path, records) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for rec in records:
            fh.write(json.dumps(rec, sort_keys=True) + "\n")
