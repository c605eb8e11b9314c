"""Corpus ingestion into three-sentence entries and lexical (BM25) retrieval."""

from __future__ import annotations

import json
import logging
import math
import re
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Iterable, Optional, Protocol, Sequence

from .data import iter_jsonl

log = logging.getLogger(__name__)

INDEX_FORMAT_VERSION = 1
SENTENCES_PER_ENTRY = 3
DEFAULT_TOP_K = 3

_SENT_SPLIT_RE = re.compile(r"(?<=[.!?])\s+")
_TOKEN_RE = re.compile(r"[^\W_]+")


class NotFound(KeyError):
    pass


def split_sentences(text: str) -> list[str]:
    return [s for s in (p.strip() for p in _SENT_SPLIT_RE.split(text.strip())) if s]


def tokenize(text: str) -> list[str]:
    return _TOKEN_RE.findall(text.lower())


@dataclass(frozen=True)
class CorpusEntry:
    id: str
    doc_id: str
    sentence_range: tuple[int, int]
    text: str

    def to_dict(self) -> dict:
        return {"id": self.id, "doc_id": self.doc_id, "sentence_range": list(self.sentence_range), "text": self.text}

    @classmethod
    def from_dict(cls, d: dict) -> "CorpusEntry":
        lo, hi = d["sentence_range"]
        return cls(d["id"], d["doc_id"], (int(lo), int(hi)), d["text"])


def chunk_document(doc_id: str, text: str, size: int = SENTENCES_PER_ENTRY) -> list[CorpusEntry]:
    sents = split_sentences(text)
    base = "_".join(doc_id.split())
    out = []
    for n, start in enumerate(range(0, len(sents), size)):
        group = sents[start:start + size]
        out.append(CorpusEntry(f"{base}_{n}", doc_id, (start, start + len(group) - 1), " ".join(group)))
    return out


class Retriever(Protocol):
    def search(self, query: str, k: int = DEFAULT_TOP_K) -> list[tuple[str, float]]: ...

    def get_entry(self, id: str) -> CorpusEntry: ...


@dataclass
class CorpusIndex:
    """Immutable BM25 index over corpus entries (k1=1.2, b=0.75 by default)."""

    entries: dict[str, CorpusEntry]
    k1: float = 1.2
    b: float = 0.75
    skipped_empty: int = 0
    _postings: dict[str, list[tuple[int, int]]] = field(init=False, repr=False)
    _ids: list[str] = field(init=False, repr=False)
    _lengths: list[int] = field(init=False, repr=False)
    _avgdl: float = field(init=False, repr=False)
    _idf: dict[str, float] = field(init=False, repr=False)

    def __post_init__(self) -> None:
        self._ids = sorted(self.entries)
        self._lengths = []
        postings: dict[str, list[tuple[int, int]]] = {}
        for i, eid in enumerate(self._ids):
            toks = tokenize(self.entries[eid].text)
            self._lengths.append(len(toks))
            for term, tf in sorted(Counter(toks).items()):
                postings.setdefault(term, []).append((i, tf))
        self._postings = dict(sorted(postings.items()))
        n = len(self._ids)
        self._avgdl = (sum(self._lengths) / n) if n else 0.0
        self._idf = {t: math.log(1.0 + (n - len(p) + 0.5) / (len(p) + 0.5)) for t, p in self._postings.items()}

    def __len__(self) -> int:
        return len(self.entries)

    def get_entry(self, id: str) -> CorpusEntry:
        try:
            return self.entries[id]
        except KeyError:
            raise NotFound(id) from None

    def search(self, query: str, k: int = DEFAULT_TOP_K) -> list[tuple[str, float]]:
        """Top-k entries by BM25; ties go to the smaller id. Zero-score entries are omitted."""
        if k < 1:
            raise ValueError("k must be >= 1")
        terms = tokenize(query)
        if not terms or not self._ids:
            return []
        scores: dict[int, float] = {}
        for term, qtf in sorted(Counter(terms).items()):
            plist = self._postings.get(term)
            if not plist:
                continue
            idf = self._idf[term]
            for i, tf in plist:
                norm = self.k1 * (1.0 - self.b + self.b * self._lengths[i] / self._avgdl)
                scores[i] = scores.get(i, 0.0) + qtf * idf * tf * (self.k1 + 1.0) / (tf + norm)
        ranked = sorted(((-s, self._ids[i]) for i, s in scores.items() if s > 0.0))
        return [(eid, -neg) for neg, eid in ranked[:k]]

    def stats(self) -> dict:
        return {
            "num_entries": len(self._ids),
            "num_terms": len(self._postings),
            "avgdl": self._avgdl,
            "doc_freq": {t: len(p) for t, p in self._postings.items()},
        }

    def save(self, path: str | Path) -> None:
        payload = {
            "format_version": INDEX_FORMAT_VERSION,
            "retriever": "bm25",
            "k1": self.k1,
            "b": self.b,
            "skipped_empty": self.skipped_empty,
            "entries": [self.entries[i].to_dict() for i in self._ids],
            "stats": self.stats(),
        }
        Path(path).write_text(json.dumps(payload, sort_keys=True, ensure_ascii=True) + "\n", encoding="utf-8")

    @classmethod
    def load(cls, path: str | Path) -> "CorpusIndex":
        payload = json.loads(Path(path).read_text(encoding="utf-8"))
        version = payload.get("format_version")
        if version != INDEX_FORMAT_VERSION:
            raise ValueError(f"{path}: unsupported index format version {version!r}")
        entries = [CorpusEntry.from_dict(d) for d in payload["entries"]]
        return cls({e.id: e for e in entries}, k1=payload["k1"], b=payload["b"], skipped_empty=payload.get("skipped_empty", 0))


def build_index(entries: Iterable[CorpusEntry], k1: float = 1.2, b: float = 0.75, skipped_empty: int = 0) -> CorpusIndex:
    table: dict[str, CorpusEntry] = {}
    for e in entries:
        if not e.id or any(c.isspace() for c in e.id):
            raise ValueError(f"invalid evidence id: {e.id!r}")
        if e.id in table:
            raise ValueError(f"duplicate evidence id: {e.id}")
        table[e.id] = e
    return CorpusIndex(table, k1=k1, b=b, skipped_empty=skipped_empty)


def ingest_corpus(path: str | Path, k1: float = 1.2, b: float = 0.75) -> CorpusIndex:
    """Build an index from a JSONL corpus.

    Records with ``doc_id`` are split into sentences and grouped three at a
    time; records with ``id`` are taken as ready-made entries.
    """
    entries: list[CorpusEntry] = []
    skipped = 0
    for rec in iter_jsonl(path):
        text = str(rec.get("text") or "")
        if "id" in rec:
            if not text.strip():
                skipped += 1
                continue
            n = len(split_sentences(text))
            entries.append(CorpusEntry(str(rec["id"]), str(rec.get("doc_id", rec["id"])), (0, max(n - 1, 0)), text))
        elif "doc_id" in rec:
            chunks = chunk_document(str(rec["doc_id"]), text)
            if not chunks:
                skipped += 1
                continue
            entries.extend(chunks)
        else:
            raise ValueError(f"{path}: record needs 'doc_id' or 'id'")
    if skipped:
        log.warning("skipped %d empty documents in %s", skipped, path)
    return build_index(entries, k1=k1, b=b, skipped_empty=skipped)


class EmbeddingRetriever:
    """Cosine-similarity retriever over externally computed embeddings.

    ``embed`` maps a list of texts to a list of vectors; :func:`http_embedder`
    builds one for an OpenAI-style ``/embeddings`` endpoint.
    """

    def __init__(self, entries: Sequence[CorpusEntry], embed: Callable[[list[str]], list[list[float]]], batch_size: int = 64):
        import numpy as np

        self._np = np
        self.entries = {e.id: e for e in entries}
        self._ids = sorted(self.entries)
        self.embed = embed
        vecs = []
        for start in range(0, len(self._ids), batch_size):
            chunk = self._ids[start:start + batch_size]
            vecs.extend(embed([self.entries[i].text for i in chunk]))
        mat = np.asarray(vecs, dtype=np.float64).reshape(len(self._ids), -1)
        norms = np.linalg.norm(mat, axis=1, keepdims=True)
        self._matrix = mat / np.where(norms == 0, 1.0, norms)

    def get_entry(self, id: str) -> CorpusEntry:
        try:
            return self.entries[id]
        except KeyError:
            raise NotFound(id) from None

    def search(self, query: str, k: int = DEFAULT_TOP_K) -> list[tuple[str, float]]:
        if k < 1:
            raise ValueError("k must be >= 1")
        if not query.strip() or not self._ids:
            return []
        np = self._np
        q = np.asarray(self.embed([query])[0], dtype=np.float64)
        qn = np.linalg.norm(q)
        if qn == 0:
            return []
        sims = self._matrix @ (q / qn)
        ranked = sorted(zip((-float(s) for s in sims), self._ids))
        return [(eid, -neg) for neg, eid in ranked[:k]]


def http_embedder(base_url: str, model: str, api_key: Optional[str] = None, timeout: float = 30.0, client=None):
    import httpx

    http = client or httpx.Client(timeout=timeout)
    headers = {"Authorization": f"Bearer {api_key}"} if api_key else {}

    def embed(texts: list[str]) -> list[list[float]]:
        resp = http.post(base_url.rstrip("/") + "/embeddings", json={"model": model, "input": texts}, headers=headers)
        resp.raise_for_status()
        data = sorted(resp.json()["data"], key=lambda d: d["index"])
        return [d["embedding"] for d in data]

    return embed
