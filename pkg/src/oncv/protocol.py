"""Tag-delimited trajectory grammar: parsing, answer extraction, format checks.

A transcript is a flat sequence of ``<plan>``, ``<search>``, ``<information>``,
``<think>`` and ``<answer>`` elements. Parsing never raises; grammar problems
are collected as violation codes and turned into a verdict by
:func:`validate_format`.
"""

from __future__ import annotations

import enum
import re
from dataclasses import dataclass, field
from typing import Iterable, Optional, Sequence


class Label(str, enum.Enum):
    SUPPORT = "SUPPORT"
    REFUTE = "REFUTE"
    NEI = "NOT ENOUGH INFO"

    @classmethod
    def parse(cls, text: str) -> "Label":
        """Canonicalize a surface label string (case-insensitive).

        Raises ``ValueError`` for anything outside the alias table.
        """
        key = " ".join(text.replace("_", " ").split()).upper().strip(" .")
        try:
            return _LABEL_ALIASES[key]
        except KeyError:
            raise ValueError(f"unrecognized label: {text!r}") from None


_LABEL_ALIASES = {
    "SUPPORT": Label.SUPPORT,
    "SUPPORTS": Label.SUPPORT,
    "SUPPORTED": Label.SUPPORT,
    "REFUTE": Label.REFUTE,
    "REFUTES": Label.REFUTE,
    "REFUTED": Label.REFUTE,
    "CONTRADICT": Label.REFUTE,
    "NOT ENOUGH INFO": Label.NEI,
    "NOT ENOUGH INFORMATION": Label.NEI,
    "NEI": Label.NEI,
    "NOT SUPPORTED": Label.NEI,
}


class SegmentKind(str, enum.Enum):
    PLAN = "plan"
    SEARCH = "search"
    INFORMATION = "information"
    THINK = "think"
    ANSWER = "answer"


class Origin(str, enum.Enum):
    POLICY = "PolicyEmitted"
    ENVIRONMENT = "EnvironmentInjected"


class Mode(str, enum.Enum):
    STRICT = "strict"
    LENIENT = "lenient"


class Violation(str, enum.Enum):
    MISSING_PLAN = "MissingPlan"
    UNKNOWN_TAG = "UnknownTag"
    SELF_EMITTED_INFORMATION = "SelfEmittedInformation"
    MULTIPLE_ANSWERS = "MultipleAnswers"
    MALFORMED_ANSWER = "MalformedAnswer"
    TEXT_OUTSIDE_TAGS = "TextOutsideTags"
    MISSING_ANSWER = "MissingAnswer"


class MalformedAnswerError(ValueError):
    pass


KNOWN_TAGS = frozenset(k.value for k in SegmentKind)

TAG_RE = re.compile(r"<(/?)([A-Za-z][A-Za-z0-9_\-]*)\s*/?>")
EVIDENCE_ID_RE = re.compile(r"\[\[\s*([^\[\]\s]+)\s*\]\]")
_LABEL_LINE_RE = re.compile(r"^[ \t]*\**label\**[ \t]*:[ \t]*(.*?)[ \t]*$", re.IGNORECASE | re.MULTILINE)
_EVIDENCE_MARK_RE = re.compile(r"^[ \t]*\**evidence\**[ \t]*:", re.IGNORECASE | re.MULTILINE)
_STRICT_ANSWER_RE = re.compile(
    r"\s*Label[ \t]*:[ \t]*(?P<label>[A-Za-z_ ]+?)[ \t]*\n"
    r"\s*Evidence[ \t]*:[ \t]*(?P<evidence>(?:\[\[[^\[\]\s]+\]\](?:[ \t]*,[ \t]*\[\[[^\[\]\s]+\]\])*)?)"
    r"\s*",
    re.IGNORECASE,
)


@dataclass(frozen=True)
class Segment:
    kind: SegmentKind
    body: str
    span: tuple[int, int]  # character offsets of the whole element, delimiters included
    origin: Origin = Origin.POLICY


@dataclass(frozen=True)
class ParsedAnswer:
    label: Label
    evidence: frozenset[str] = frozenset()

    def to_dict(self) -> dict:
        return {"label": self.label.value, "evidence": sorted(self.evidence)}


@dataclass(frozen=True)
class Trajectory:
    claim: str
    segments: tuple[Segment, ...]
    answer: Optional[ParsedAnswer]
    raw: str = ""
    mode: Mode = Mode.STRICT
    parse_violations: tuple[Violation, ...] = ()

    @property
    def search_count(self) -> int:
        return sum(1 for s in self.segments if s.kind is SegmentKind.SEARCH)

    def of_kind(self, kind: SegmentKind) -> list[Segment]:
        return [s for s in self.segments if s.kind is kind]

    def queries(self) -> list[str]:
        return [s.body.strip() for s in self.of_kind(SegmentKind.SEARCH)]


@dataclass(frozen=True)
class FormatVerdict:
    violations: tuple[Violation, ...] = field(default=())

    @property
    def ok(self) -> bool:
        return not self.violations

    def codes(self) -> list[str]:
        return [v.value for v in self.violations]


def _dedup(items: Iterable[Violation]) -> tuple[Violation, ...]:
    return tuple(dict.fromkeys(items))


def parse_answer_block(body: str) -> ParsedAnswer:
    """Extract label and evidence ids from the interior of an answer element.

    The label comes from the first ``Label:`` line; evidence ids are every
    ``[[id]]`` token after the ``Evidence:`` marker (or anywhere, if the
    marker is missing). Duplicate ids collapse.
    """
    m = _LABEL_LINE_RE.search(body)
    if m is None:
        raise MalformedAnswerError("no label line")
    try:
        label = Label.parse(m.group(1))
    except ValueError as exc:
        raise MalformedAnswerError(str(exc)) from None
    mark = _EVIDENCE_MARK_RE.search(body)
    tail = body[mark.end():] if mark else body[m.end():]
    return ParsedAnswer(label, frozenset(EVIDENCE_ID_RE.findall(tail)))


def answer_is_well_formed(body: str) -> bool:
    m = _STRICT_ANSWER_RE.fullmatch(body)
    if m is None:
        return False
    try:
        Label.parse(m.group("label"))
    except ValueError:
        return False
    return True


def render_information_block(entries: Sequence[tuple[str, str]]) -> str:
    """Render retrieved entries as an ``<information>`` element.

    Entry text must be a single line and free of protocol tags so that the
    block parses back into the same pairs.
    """
    if not entries:
        raise ValueError("information block needs at least one entry")
    seen: set[str] = set()
    lines = []
    for eid, text in entries:
        if not eid or any(c.isspace() for c in eid) or "[" in eid or "]" in eid:
            raise ValueError(f"invalid evidence id: {eid!r}")
        if eid in seen:
            raise ValueError(f"duplicate evidence id: {eid}")
        if "\n" in text or "\r" in text:
            raise ValueError(f"entry {eid} text spans multiple lines")
        if _has_tag(text, KNOWN_TAGS):
            raise ValueError(f"entry {eid} text contains a protocol tag")
        seen.add(eid)
        lines.append(f"[[{eid}]]: {text}")
    return "<information>\n" + "\n".join(lines) + "\n</information>"


_INFO_LINE_RE = re.compile(r"^\[\[([^\[\]\s]+)\]\]: ?(.*)$")


def parse_information_body(body: str) -> list[tuple[str, str]]:
    pairs = []
    for line in body.split("\n"):
        m = _INFO_LINE_RE.match(line)
        if m:
            pairs.append((m.group(1), m.group(2)))
    return pairs


def sanitize_entry_text(text: str) -> str:
    """Flatten whitespace and defuse protocol tags inside retrieved text."""
    flat = " ".join(text.split())
    return TAG_RE.sub(lambda m: m.group(0).replace("<", "&lt;") if m.group(2) in KNOWN_TAGS else m.group(0), flat)


def _has_tag(text: str, names: Optional[frozenset[str]] = None) -> bool:
    for m in TAG_RE.finditer(text):
        if names is None or m.group(2) in names:
            return True
    return False


def parse_transcript(raw: str, mode: Mode | str = Mode.STRICT, claim: str = "") -> Trajectory:
    """Split a transcript into segments and pick out the final answer.

    Strict mode uses only the last closed answer element. Lenient mode walks
    answer elements from the end and keeps the first that parses, falling back
    to an unclosed trailing ``<answer>``.
    """
    mode = Mode(mode)
    segments: list[Segment] = []
    violations: list[Violation] = []
    unclosed_answer: Optional[str] = None
    pos = 0
    n = len(raw)
    while pos < n:
        m = TAG_RE.search(raw, pos)
        if m is None:
            if raw[pos:].strip():
                violations.append(Violation.TEXT_OUTSIDE_TAGS)
            break
        if raw[pos:m.start()].strip():
            violations.append(Violation.TEXT_OUTSIDE_TAGS)
        closing, name = m.group(1) == "/", m.group(2)
        if closing or name not in KNOWN_TAGS:
            violations.append(Violation.UNKNOWN_TAG)
            pos = m.end()
            continue
        close = raw.find(f"</{name}>", m.end())
        if close < 0:
            if name == SegmentKind.ANSWER.value:
                unclosed_answer = raw[m.end():]
                violations.append(Violation.MALFORMED_ANSWER)
            else:
                violations.append(Violation.UNKNOWN_TAG)
            break
        body = raw[m.end():close]
        kind = SegmentKind(name)
        # retrieved text may legitimately contain angle-bracket markup
        nested = frozenset(KNOWN_TAGS) if kind is SegmentKind.INFORMATION else None
        if _has_tag(body, nested):
            violations.append(Violation.UNKNOWN_TAG)
        end = close + len(name) + 3
        origin = Origin.POLICY
        if kind is SegmentKind.INFORMATION and segments and segments[-1].kind is SegmentKind.SEARCH:
            origin = Origin.ENVIRONMENT
        segments.append(Segment(kind, body, (m.start(), end), origin))
        pos = end

    answers = [s for s in segments if s.kind is SegmentKind.ANSWER]
    answer: Optional[ParsedAnswer] = None
    if mode is Mode.STRICT:
        if answers:
            try:
                answer = parse_answer_block(answers[-1].body)
            except MalformedAnswerError:
                answer = None
    else:
        candidates = [s.body for s in answers]
        if unclosed_answer is not None:
            candidates.append(unclosed_answer)
        for body in reversed(candidates):
            try:
                answer = parse_answer_block(body)
                break
            except MalformedAnswerError:
                continue
    return Trajectory(
        claim=claim,
        segments=tuple(segments),
        answer=answer,
        raw=raw,
        mode=mode,
        parse_violations=_dedup(violations),
    )


def validate_format(t: Trajectory, require_plan: bool = True) -> FormatVerdict:
    """Check every format rule; the verdict is ok only with zero violations.

    ``require_plan`` is off for single-shot (offline) responses, which have
    no planning step.
    """
    v: list[Violation] = list(t.parse_violations)
    segs = t.segments
    if require_plan and (not segs or segs[0].kind is not SegmentKind.PLAN):
        v.append(Violation.MISSING_PLAN)
    if any(s.kind is SegmentKind.INFORMATION and s.origin is not Origin.ENVIRONMENT for s in segs):
        v.append(Violation.SELF_EMITTED_INFORMATION)
    answers = [i for i, s in enumerate(segs) if s.kind is SegmentKind.ANSWER]
    if not answers:
        if Violation.MALFORMED_ANSWER not in v:
            v.append(Violation.MISSING_ANSWER)
    else:
        if len(answers) > 1:
            v.append(Violation.MULTIPLE_ANSWERS)
        if not answer_is_well_formed(segs[answers[-1]].body):
            v.append(Violation.MALFORMED_ANSWER)
        if answers[-1] != len(segs) - 1:
            # elements after the answer count as extraneous output
            v.append(Violation.TEXT_OUTSIDE_TAGS)
    return FormatVerdict(_dedup(v))


def serialize(t: Trajectory | Sequence[Segment], sep: str = "\n") -> str:
    segs = t.segments if isinstance(t, Trajectory) else t
    return sep.join(f"<{s.kind.value}>{s.body}</{s.kind.value}>" for s in segs)


def render_answer(label: Label, evidence: Iterable[str]) -> str:
    ids = ", ".join(f"[[{e}]]" for e in evidence)
    return f"<answer>\nLabel: {label.value}\nEvidence: {ids}\n</answer>"
