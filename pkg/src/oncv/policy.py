"""Policy clients: deterministic scripted continuations and an HTTP chat endpoint."""

from __future__ import annotations

import json
import logging
import math
import os
import re
import threading
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Mapping, Optional, Protocol, Sequence, Union

log = logging.getLogger(__name__)

FIXTURE_DIR = Path(__file__).parent / "fixtures"


class PolicyError(RuntimeError):
    """Transport-level failure after all retries."""


@dataclass(frozen=True)
class PolicyRequest:
    context: str
    turn: int = 0
    stop: tuple[str, ...] = ()
    forced: bool = False
    claim_id: str = ""
    replica: int = 0
    variables: Mapping[str, str] = field(default_factory=dict)
    temperature: Optional[float] = None
    max_tokens: Optional[int] = None


@dataclass(frozen=True)
class Completion:
    text: str
    # (token, probability) pairs when the backend reports them
    tokens: Optional[tuple[tuple[str, float], ...]] = None


class PolicyClient(Protocol):
    def generate(self, request: PolicyRequest) -> Completion: ...


def apply_stop(text: str, stop: Sequence[str]) -> str:
    """Cut at the earliest stop sequence, dropping the sequence itself."""
    cut = len(text)
    for s in stop:
        i = text.find(s)
        if 0 <= i < cut:
            cut = i
    return text[:cut]


_PIECE_RE = re.compile(r"\S+|\s+")


def synthetic_tokens(text: str, label_prob: float) -> tuple[tuple[str, float], ...]:
    """Whitespace tokenization where the label word after ``Label:`` gets ``label_prob``."""
    m = re.search(r"Label:[ \t]*(\S)", text)
    target = m.start(1) if m else -1
    out = []
    pos = 0
    for piece in _PIECE_RE.findall(text):
        p = label_prob if pos <= target < pos + len(piece) else 1.0
        out.append((piece, p))
        pos += len(piece)
    return tuple(out)


TurnSpec = Union[str, Mapping[str, Any]]


class ScriptedPolicy:
    """Canned continuations indexed by (claim, replica, turn).

    A script is ``{"default": [turns...], "claims": {claim_id: [[turns for
    replica 0], [turns for replica 1], ...]}}``; a flat turn list for a claim
    applies to every replica. Turn strings may use ``{claim}``,
    ``{gold_label}`` and ``{gold_evidence}`` placeholders. A turn may be a
    mapping ``{"text": ..., "label_prob": p}`` to attach token probabilities.
    Requests past the end of a script repeat its last turn.
    """

    def __init__(self, script: Mapping[str, Any] | Sequence[TurnSpec], name: str = "scripted"):
        if not isinstance(script, Mapping):
            script = {"default": list(script)}
        self.default: list[TurnSpec] = list(script.get("default") or [])
        self.claims: dict[str, Any] = dict(script.get("claims") or {})
        self.name = name

    @classmethod
    def load(cls, ref: str) -> "ScriptedPolicy":
        """Load a script by fixture name (``happy_path``) or file path."""
        path = Path(ref)
        if not path.exists():
            path = FIXTURE_DIR / "scripts" / f"{ref}.json"
        if not path.exists():
            raise FileNotFoundError(f"no scripted policy fixture {ref!r}")
        return cls(json.loads(path.read_text(encoding="utf-8")), name=ref)

    def _turns(self, claim_id: str, replica: int) -> list[TurnSpec]:
        spec = self.claims.get(claim_id)
        if spec is None:
            return self.default
        if spec and all(isinstance(t, list) for t in spec):
            return spec[replica % len(spec)]
        return spec

    def generate(self, request: PolicyRequest) -> Completion:
        turns = self._turns(request.claim_id, request.replica)
        if not turns:
            return Completion("")
        spec = turns[min(request.turn, len(turns) - 1)]
        label_prob = None
        if isinstance(spec, Mapping):
            label_prob = spec.get("label_prob")
            spec = spec["text"]
        text = spec.format_map(_Defaulting(request.variables)) if request.variables else spec
        text = apply_stop(text, request.stop)
        tokens = synthetic_tokens(text, float(label_prob)) if label_prob is not None else None
        return Completion(text, tokens)


class _Defaulting(dict):
    def __missing__(self, key: str) -> str:
        return "{" + key + "}"


class RateLimiter:
    """Minimum spacing between requests, shared across threads."""

    def __init__(self, max_per_second: Optional[float]):
        self.interval = 1.0 / max_per_second if max_per_second else 0.0
        self._lock = threading.Lock()
        self._next = 0.0

    def wait(self) -> None:
        if not self.interval:
            return
        with self._lock:
            now = time.monotonic()
            delay = self._next - now
            self._next = max(now, self._next) + self.interval
        if delay > 0:
            time.sleep(delay)


class HttpChatPolicy:
    """Chat-completion endpoint client.

    The whole context (instructions plus transcript so far) goes out as one
    user message; the reply is the continuation. Token log-probabilities are
    requested when ``logprobs`` is set.
    """

    def __init__(
        self,
        base_url: str,
        model: str,
        api_key: Optional[str] = None,
        api_key_env: str = "ONCV_API_KEY",
        temperature: float = 0.8,
        max_tokens: int = 512,
        timeout: float = 60.0,
        retries: int = 3,
        backoff: float = 1.0,
        max_requests_per_second: Optional[float] = None,
        logprobs: bool = True,
        client=None,
    ):
        import httpx

        self.url = base_url.rstrip("/") + "/chat/completions"
        self.model = model
        self.api_key = api_key if api_key is not None else os.environ.get(api_key_env, "")
        self.temperature = temperature
        self.max_tokens = max_tokens
        self.retries = max(1, retries)
        self.backoff = backoff
        self.logprobs = logprobs
        self.limiter = RateLimiter(max_requests_per_second)
        self._http = client or httpx.Client(timeout=timeout)

    def _payload(self, request: PolicyRequest) -> dict:
        body: dict[str, Any] = {
            "model": self.model,
            "messages": [{"role": "user", "content": request.context}],
            "temperature": self.temperature if request.temperature is None else request.temperature,
            "max_tokens": self.max_tokens if request.max_tokens is None else request.max_tokens,
        }
        if request.stop:
            body["stop"] = list(request.stop)
        if self.logprobs:
            body["logprobs"] = True
        return body

    def generate(self, request: PolicyRequest) -> Completion:
        import httpx

        headers = {"Authorization": f"Bearer {self.api_key}"} if self.api_key else {}
        last: Optional[Exception] = None
        for attempt in range(self.retries):
            self.limiter.wait()
            try:
                resp = self._http.post(self.url, json=self._payload(request), headers=headers)
                if resp.status_code == 429 or resp.status_code >= 500:
                    raise httpx.HTTPStatusError(f"status {resp.status_code}", request=resp.request, response=resp)
                if resp.status_code >= 400:
                    # client errors do not go away on retry
                    raise PolicyError(f"policy endpoint rejected request: {resp.status_code} {resp.text[:200]}")
                return _parse_chat_response(resp.json(), request.stop)
            except (httpx.HTTPError, KeyError, IndexError, ValueError) as exc:
                last = exc
                log.warning("policy request failed (attempt %d/%d): %r", attempt + 1, self.retries, exc)
                if attempt + 1 < self.retries and self.backoff:
                    time.sleep(self.backoff * (2**attempt))
        raise PolicyError(f"policy endpoint failed after {self.retries} attempts: {last!r}")


def _parse_chat_response(data: dict, stop: Sequence[str]) -> Completion:
    choice = data["choices"][0]
    text = choice["message"]["content"] or ""
    tokens = None
    content = (choice.get("logprobs") or {}).get("content")
    if content:
        tokens = tuple((t["token"], math.exp(t["logprob"])) for t in content)
    # some servers echo the stop sequence back
    return Completion(apply_stop(text, stop), tokens)
