"""Online (search-interleaved) and offline (single-shot) verification episodes."""

from __future__ import annotations

import hashlib
import json
import logging
import time
from collections import Counter
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Callable, Optional, Sequence

from .corpus import Retriever
from .data import ClaimSample
from .grpo import DEFAULT_EPSILON_NORM, group_stats
from .policy import Completion, PolicyClient, PolicyRequest
from .prompts import FORCED_ANSWER_MESSAGE, offline_prompt, online_prompt
from .protocol import (
    Mode,
    Trajectory,
    parse_transcript,
    render_information_block,
    sanitize_entry_text,
    validate_format,
)
from .reward import RewardBreakdown, final_reward

log = logging.getLogger(__name__)

SEARCH_OPEN, SEARCH_CLOSE = "<search>", "</search>"
ANSWER_OPEN = "<answer>"
EMPTY_INFORMATION = "<information>\n</information>"


@dataclass(frozen=True)
class EpisodeConfig:
    max_searches: int = 3
    max_turns: int = 4
    top_k: int = 3
    prompt_template: str = "online"
    temperature: Optional[float] = None
    max_tokens: Optional[int] = None
    distractors: int = 3

    def __post_init__(self) -> None:
        if self.prompt_template not in ("online", "offline"):
            raise ValueError(f"prompt_template must be 'online' or 'offline', got {self.prompt_template!r}")
        if self.max_searches < 0 or self.top_k < 1:
            raise ValueError("max_searches must be >= 0 and top_k >= 1")
        if self.max_turns < self.max_searches + 1:
            raise ValueError("max_turns must leave room for the answer turn (max_turns >= max_searches + 1)")


@dataclass
class TurnLog:
    turn: int
    forced: bool
    continuation: str
    query: Optional[str] = None
    retrieved: list[str] = field(default_factory=list)
    dropped_search: bool = False


@dataclass
class EpisodeResult:
    sample: ClaimSample
    mode: str
    transcript: str
    trajectory: Trajectory
    reward: RewardBreakdown
    format_violations: list[str]
    turns: list[TurnLog] = field(default_factory=list)
    answer_probability: Optional[float] = None
    repeated_queries: int = 0
    provided_evidence: Optional[list[str]] = None
    replica: int = 0
    error: Optional[str] = None
    elapsed: float = 0.0
    advantage: Optional[float] = None
    group_mean: Optional[float] = None
    group_std: Optional[float] = None

    @property
    def search_count(self) -> int:
        return self.trajectory.search_count

    @property
    def forced_turns(self) -> int:
        return sum(1 for t in self.turns if t.forced)

    def to_record(self) -> dict:
        s = self.sample
        t = self.trajectory
        return {
            "claim_id": s.claim_id,
            "claim": s.claim,
            "dataset": s.dataset,
            "gold_label": s.gold_label.value,
            "gold_label_raw": s.label_raw,
            "gold_evidence": sorted(s.gold_evidence),
            "replica": self.replica,
            "mode": self.mode,
            "transcript": self.transcript,
            "segments": [
                {"kind": seg.kind.value, "origin": seg.origin.value, "span": list(seg.span), "body": seg.body}
                for seg in t.segments
            ],
            "answer": t.answer.to_dict() if t.answer else None,
            "search_count": t.search_count,
            "format_violations": self.format_violations,
            "reward": self.reward.to_dict(),
            "advantage": self.advantage,
            "group_mean": self.group_mean,
            "group_std": self.group_std,
            "answer_probability": self.answer_probability,
            "probability_convention": "first token of label word",
            "turns": [asdict(x) for x in self.turns],
            "repeated_queries": self.repeated_queries,
            "provided_evidence": self.provided_evidence,
            "error": self.error,
            "meta": {"elapsed_s": round(self.elapsed, 6)},
        }


def label_token_probability(text: str, tokens: Optional[Sequence[tuple[str, float]]]) -> Optional[float]:
    """Probability of the token that starts the label word of the last answer in ``text``."""
    if not tokens:
        return None
    start = text.rfind(ANSWER_OPEN)
    if start < 0:
        return None
    i = text.find("Label:", start)
    if i < 0:
        return None
    i += len("Label:")
    while i < len(text) and text[i] in " \t":
        i += 1
    if i >= len(text):
        return None
    pos = 0
    for tok, p in tokens:
        if pos <= i < pos + len(tok):
            return p
        pos += len(tok)
    return None


def _variables(sample: ClaimSample) -> dict[str, str]:
    return {
        "claim": sample.claim,
        "claim_id": sample.claim_id,
        "gold_label": sample.gold_label.value,
        "gold_evidence": ", ".join(f"[[{e}]]" for e in sorted(sample.gold_evidence)),
    }


def information_for(retriever: Retriever, hits: Sequence[tuple[str, float]]) -> str:
    if not hits:
        return EMPTY_INFORMATION
    return render_information_block([(eid, sanitize_entry_text(retriever.get_entry(eid).text)) for eid, _ in hits])


def _failed(sample: ClaimSample, mode: str, transcript: str, turns, replica: int, err: Exception, started: float, require_plan: bool):
    traj = parse_transcript(transcript, Mode.STRICT, claim=sample.claim)
    verdict = validate_format(traj, require_plan=require_plan)
    return EpisodeResult(
        sample=sample,
        mode=mode,
        transcript=transcript,
        trajectory=traj,
        reward=RewardBreakdown.zero(sample.gold),
        format_violations=verdict.codes(),
        turns=turns,
        replica=replica,
        error=f"{type(err).__name__}: {err}",
        elapsed=time.perf_counter() - started,
    )


def run_online_episode(
    sample: ClaimSample,
    policy: PolicyClient,
    index: Retriever,
    cfg: EpisodeConfig = EpisodeConfig(),
    replica: int = 0,
) -> EpisodeResult:
    """Run one search-interleaved episode and score it.

    The policy is stopped at ``</search>``; the environment runs the query and
    appends the information block. Once the search budget is spent (or on the
    last turn) the context gets a forced-answer instruction and any further
    search in that continuation is discarded.
    """
    started = time.perf_counter()
    prompt = online_prompt(sample.claim, cfg.max_searches)
    variables = _variables(sample)
    transcript = ""
    searches = 0
    turns: list[TurnLog] = []
    queries: Counter[str] = Counter()
    answer_completion: Optional[Completion] = None
    try:
        for turn in range(cfg.max_turns):
            forced = searches >= cfg.max_searches or turn == cfg.max_turns - 1
            context = prompt + transcript + (FORCED_ANSWER_MESSAGE if forced else "")
            completion = policy.generate(
                PolicyRequest(
                    context=context,
                    turn=turn,
                    stop=(SEARCH_CLOSE,),
                    forced=forced,
                    claim_id=sample.claim_id,
                    replica=replica,
                    variables=variables,
                    temperature=cfg.temperature,
                    max_tokens=cfg.max_tokens,
                )
            )
            text = completion.text
            s = text.find(SEARCH_OPEN)
            a = text.find(ANSWER_OPEN)
            wants_search = s >= 0 and (a < 0 or s < a)
            if wants_search and forced:
                kept = text[:s]
                turns.append(TurnLog(turn, True, kept, dropped_search=True))
                transcript += kept
                break
            if wants_search:
                body_end = text.find(SEARCH_CLOSE, s)
                query = text[s + len(SEARCH_OPEN): body_end if body_end >= 0 else len(text)]
                step = text[:s] + SEARCH_OPEN + query + SEARCH_CLOSE
                q = query.strip()
                hits = index.search(q, cfg.top_k) if q else []
                queries[" ".join(q.lower().split())] += 1
                transcript += step + "\n" + information_for(index, hits) + "\n"
                searches += 1
                turns.append(TurnLog(turn, False, step, query=q, retrieved=[h for h, _ in hits]))
                continue
            transcript += text
            turns.append(TurnLog(turn, forced, text))
            if a >= 0:
                answer_completion = completion
                break
            if forced:
                break
    except Exception as exc:  # policy transport or retrieval failure
        log.warning("episode %s/%d failed: %r", sample.claim_id, replica, exc)
        return _failed(sample, "online", transcript, turns, replica, exc, started, True)

    traj = parse_transcript(transcript, Mode.STRICT, claim=sample.claim)
    verdict = validate_format(traj, require_plan=True)
    prob = label_token_probability(answer_completion.text, answer_completion.tokens) if answer_completion else None
    return EpisodeResult(
        sample=sample,
        mode="online",
        transcript=transcript,
        trajectory=traj,
        reward=final_reward(traj, sample.gold, verdict),
        format_violations=verdict.codes(),
        turns=turns,
        answer_probability=prob,
        repeated_queries=sum(c - 1 for c in queries.values()),
        replica=replica,
        elapsed=time.perf_counter() - started,
    )


def run_offline_episode(
    sample: ClaimSample,
    provided_evidence: Sequence[tuple[str, str]],
    policy: PolicyClient,
    cfg: EpisodeConfig = EpisodeConfig(prompt_template="offline"),
    replica: int = 0,
) -> EpisodeResult:
    """Single policy call with the evidence already in the prompt."""
    started = time.perf_counter()
    if provided_evidence:
        block = render_information_block([(eid, sanitize_entry_text(text)) for eid, text in provided_evidence])
    else:
        block = EMPTY_INFORMATION
    context = offline_prompt(sample.claim, block)
    ids = [eid for eid, _ in provided_evidence]
    try:
        completion = policy.generate(
            PolicyRequest(
                context=context,
                claim_id=sample.claim_id,
                replica=replica,
                variables=_variables(sample),
                temperature=cfg.temperature,
                max_tokens=cfg.max_tokens,
            )
        )
    except Exception as exc:
        log.warning("offline episode %s/%d failed: %r", sample.claim_id, replica, exc)
        res = _failed(sample, "offline", "", [], replica, exc, started, False)
        res.provided_evidence = ids
        return res
    transcript = completion.text
    traj = parse_transcript(transcript, Mode.STRICT, claim=sample.claim)
    verdict = validate_format(traj, require_plan=False)
    return EpisodeResult(
        sample=sample,
        mode="offline",
        transcript=transcript,
        trajectory=traj,
        reward=final_reward(traj, sample.gold, verdict),
        format_violations=verdict.codes(),
        turns=[TurnLog(0, False, transcript)],
        answer_probability=label_token_probability(transcript, completion.tokens),
        provided_evidence=ids,
        replica=replica,
        elapsed=time.perf_counter() - started,
    )


def build_evidence_bundle(sample: ClaimSample, retriever: Retriever, distractors: int = 3) -> list[tuple[str, str]]:
    """Gold entries plus the top retrieved non-gold entries for the claim, sorted by id.

    Gold ids missing from the corpus raise ``NotFound``.
    """
    chosen = {eid: retriever.get_entry(eid).text for eid in sample.gold_evidence}
    if distractors > 0:
        extra = [eid for eid, _ in retriever.search(sample.claim, distractors + len(chosen)) if eid not in chosen]
        for eid in extra[:distractors]:
            chosen[eid] = retriever.get_entry(eid).text
    return sorted(chosen.items())


def run_batch(
    samples: Sequence[ClaimSample],
    policy: PolicyClient,
    index: Optional[Retriever],
    cfg: EpisodeConfig = EpisodeConfig(),
    group_size: int = 3,
    jobs: int = 1,
    epsilon_norm: float = DEFAULT_EPSILON_NORM,
    evidence_for: Optional[Callable[[ClaimSample], Sequence[tuple[str, str]]]] = None,
    out: Optional[str | Path] = None,
) -> list[EpisodeResult]:
    """Run ``group_size`` episodes per claim and attach group-normalized advantages."""
    if group_size < 1:
        raise ValueError("group_size must be >= 1")
    offline = cfg.prompt_template == "offline"
    if offline and evidence_for is None:
        if index is None:
            raise ValueError("offline rollout needs an index or an evidence_for callback")
        evidence_for = lambda s: build_evidence_bundle(s, index, cfg.distractors)  # noqa: E731
    if not offline and index is None:
        raise ValueError("online rollout needs an index")

    def one(task: tuple[int, int]) -> EpisodeResult:
        i, r = task
        sample = samples[i]
        if offline:
            try:
                evidence = list(evidence_for(sample))
            except Exception as exc:
                return _failed(sample, "offline", "", [], r, exc, time.perf_counter(), False)
            return run_offline_episode(sample, evidence, policy, cfg, replica=r)
        return run_online_episode(sample, policy, index, cfg, replica=r)

    tasks = [(i, r) for i in range(len(samples)) for r in range(group_size)]
    if jobs > 1 and len(tasks) > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(one, tasks))
    else:
        results = [one(t) for t in tasks]

    for i in range(len(samples)):
        group = results[i * group_size:(i + 1) * group_size]
        stats = group_stats([g.reward.r_final for g in group], epsilon_norm)
        for g, adv in zip(group, stats.advantages):
            g.advantage, g.group_mean, g.group_std = adv, stats.mean, stats.std
    if out is not None:
        write_rollout_log(out, results)
    return results


def record_line(record: dict) -> str:
    return json.dumps(record, sort_keys=True, ensure_ascii=True)


def write_rollout_log(path: str | Path, results: Sequence[EpisodeResult]) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for res in results:
            fh.write(record_line(res.to_record()) + "\n")


def content_hash(records: Sequence[dict]) -> str:
    """SHA-256 over the canonical JSON of records with their ``meta`` field removed."""
    h = hashlib.sha256()
    for rec in records:
        h.update(record_line({k: v for k, v in rec.items() if k != "meta"}).encode("utf-8"))
        h.update(b"\n")
    return h.hexdigest()


def log_content_hash(path: str | Path) -> str:
    from .data import iter_jsonl

    return content_hash(list(iter_jsonl(path)))
