"""Judge-model data filtering: keep a claim only if the judge reproduces its gold exactly."""

from __future__ import annotations

import json
import threading
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence

from .corpus import NotFound, Retriever
from .data import ClaimSample, load_dataset
from .policy import PolicyClient
from .protocol import Mode, parse_transcript
from .rollout import EpisodeConfig, build_evidence_bundle, run_offline_episode

KEEP, DROP, UNDECIDED = "kept", "dropped", "undecided"


@dataclass(frozen=True)
class KeepDecision:
    keep: bool
    judge_label: Optional[str]
    judge_evidence: Optional[list[str]]
    reason: str
    status: str = DROP
    judge_output: str = ""

    def to_dict(self) -> dict:
        return {
            "keep": self.keep,
            "status": self.status,
            "judge_label": self.judge_label,
            "judge_evidence": self.judge_evidence,
            "reason": self.reason,
            "judge_output": self.judge_output,
        }


def filter_sample(
    sample: ClaimSample,
    judge: PolicyClient,
    evidence_bundle: Sequence[tuple[str, str]],
    cfg: EpisodeConfig = EpisodeConfig(prompt_template="offline"),
) -> KeepDecision:
    res = run_offline_episode(sample, evidence_bundle, judge, cfg)
    if res.error is not None:
        return KeepDecision(False, None, None, f"judge failure: {res.error}", UNDECIDED)
    answer = parse_transcript(res.transcript, Mode.LENIENT).answer
    if answer is None:
        return KeepDecision(False, None, None, "unparseable judge answer", DROP, res.transcript)
    label, evidence = answer.label.value, sorted(answer.evidence)
    if answer.label != sample.gold_label:
        return KeepDecision(False, label, evidence, "label mismatch", DROP, res.transcript)
    if answer.evidence != sample.gold_evidence:
        return KeepDecision(False, label, evidence, "evidence mismatch", DROP, res.transcript)
    return KeepDecision(True, label, evidence, "exact match", KEEP, res.transcript)


@dataclass
class FilterReport:
    kept: int = 0
    dropped: int = 0
    undecided: int = 0
    total: int = 0
    decisions: list[dict] = field(default_factory=list)

    @property
    def retention_rate(self) -> Optional[float]:
        return self.kept / self.total if self.total else None

    def to_dict(self) -> dict:
        return {
            "kept": self.kept,
            "dropped": self.dropped,
            "undecided": self.undecided,
            "total": self.total,
            "retention_rate": self.retention_rate,
        }


def run_filter(
    samples: Sequence[ClaimSample] | str | Path,
    judge: PolicyClient,
    corpus: Retriever,
    concurrency: int = 1,
    out: Optional[str | Path] = None,
    distractors: int = 3,
    decisions_path: Optional[str | Path] = None,
) -> FilterReport:
    """Filter a dataset; writes kept samples to ``out`` and per-sample decisions alongside."""
    if isinstance(samples, (str, Path)):
        samples = load_dataset(samples)
    report = FilterReport(total=len(samples))
    lock = threading.Lock()
    decision_rows: list[Optional[dict]] = [None] * len(samples)

    def one(i: int) -> None:
        sample = samples[i]
        try:
            bundle = build_evidence_bundle(sample, corpus, distractors)
        except NotFound as exc:
            decision = KeepDecision(False, None, None, f"gold evidence missing from corpus: {exc.args[0]}", DROP)
        else:
            decision = filter_sample(sample, judge, bundle)
        row = {"claim_id": sample.claim_id, **decision.to_dict()}
        with lock:
            decision_rows[i] = row

    if concurrency > 1 and len(samples) > 1:
        with ThreadPoolExecutor(max_workers=concurrency) as pool:
            list(pool.map(one, range(len(samples))))
    else:
        for i in range(len(samples)):
            one(i)

    report.decisions = [r for r in decision_rows if r is not None]
    for row in report.decisions:
        if row["status"] == KEEP:
            report.kept += 1
        elif row["status"] == UNDECIDED:
            report.undecided += 1
        else:
            report.dropped += 1

    if out is not None:
        out = Path(out)
        kept_ids = {r["claim_id"] for r in report.decisions if r["status"] == KEEP}
        with open(out, "w", encoding="utf-8") as fh:
            for s in samples:
                if s.claim_id in kept_ids:
                    fh.write(json.dumps(s.to_dict(), sort_keys=True) + "\n")
        dpath = Path(decisions_path) if decisions_path else out.with_name(out.name + ".decisions.jsonl")
        with open(dpath, "w", encoding="utf-8") as fh:
            for row in report.decisions:
                fh.write(json.dumps(row, sort_keys=True) + "\n")
    return report
