import json
import math
import random

import httpx
import pytest
from hypothesis import given, strategies as st

from oncv.corpus import (
    CorpusEntry,
    CorpusIndex,
    EmbeddingRetriever,
    NotFound,
    build_index,
    chunk_document,
    http_embedder,
    ingest_corpus,
    split_sentences,
    tokenize,
)


def write_jsonl(path, rows):
    path.write_text("".join(json.dumps(r) + "\n" for r in rows))
    return path


def manual_chunks(sentences, size=3):
    out = []
    i = 0
    while i < len(sentences):
        out.append(sentences[i:i + size])
        i += size
    return out


def test_seven_sentences_make_three_entries(tmp_path):
    sents = [f"Sentence number {w}." for w in "one two three four five six seven".split()]
    path = write_jsonl(tmp_path / "c.jsonl", [{"doc_id": "Doc A", "text": " ".join(sents)}])
    index = ingest_corpus(path)
    expected = manual_chunks(sents)
    assert [len(g) for g in expected] == [3, 3, 1]
    assert [index.get_entry(f"Doc_A_{i}").text for i in range(3)] == [" ".join(g) for g in expected]
    assert index.get_entry("Doc_A_2").sentence_range == (6, 6)


def test_three_sentences_one_entry():
    (e,) = chunk_document("d", "A b. C d! E f?")
    assert e.sentence_range == (0, 2) and e.text == "A b. C d! E f?"


def test_prechunked_passthrough(tmp_path):
    path = write_jsonl(tmp_path / "c.jsonl", [{"id": "e_5", "text": "Verbatim  text.\nSecond line."}])
    index = ingest_corpus(path)
    assert index.get_entry("e_5").text == "Verbatim  text.\nSecond line."


def test_duplicate_id_is_error(tmp_path):
    path = write_jsonl(tmp_path / "c.jsonl", [{"id": "e_1", "text": "a"}, {"id": "e_1", "text": "b"}])
    with pytest.raises(ValueError, match="duplicate"):
        ingest_corpus(path)


def test_empty_documents_skipped(tmp_path, caplog):
    path = write_jsonl(tmp_path / "c.jsonl", [{"doc_id": "a", "text": "  "}, {"doc_id": "b", "text": "Hi there."}])
    index = ingest_corpus(path)
    assert len(index) == 1 and index.skipped_empty == 1


def test_get_entry_not_found(fixture_index):
    assert fixture_index.get_entry("Lake_Verin_0").doc_id == "Lake_Verin"
    with pytest.raises(NotFound):
        fixture_index.get_entry("e_999")


def test_sentence_split_and_tokenize():
    assert split_sentences("Dr. Who is here. Really? Yes!") == ["Dr.", "Who is here.", "Really?", "Yes!"]
    assert tokenize("Café_au-lait 42, ÉTÉ") == ["café", "au", "lait", "42", "été"]


def toy_entries(n=10, seed=0):
    rng = random.Random(seed)
    vocab = [f"w{i}" for i in range(300)]
    return [CorpusEntry(f"e_{i:03d}", f"d{i}", (0, 0), " ".join(rng.sample(vocab, 12))) for i in range(n)]


def test_self_retrieval_small():
    index = build_index(toy_entries(10))
    for e in index.entries.values():
        assert index.search(e.text, 3)[0][0] == e.id


def test_no_overlap_gives_empty():
    index = build_index(toy_entries(10))
    assert index.search("zzz qqq", 3) == []
    assert index.search("!!! ...", 3) == []


def test_k_larger_than_corpus():
    entries = [CorpusEntry(f"e{i}", "d", (0, 0), f"common word{i}") for i in range(4)]
    index = build_index(entries)
    hits = index.search("common", 10)
    assert [h for h, _ in hits] == ["e0", "e1", "e2", "e3"]
    assert all(s == hits[0][1] for _, s in hits)


def test_scores_sorted_ties_by_id():
    entries = [CorpusEntry(i, "d", (0, 0), "alpha beta") for i in ("b", "a", "c")]
    hits = build_index(entries).search("alpha", 3)
    assert [h for h, _ in hits] == ["a", "b", "c"]


def test_bm25_matches_hand_formula():
    entries = [CorpusEntry("x", "d", (0, 0), "cat cat dog"), CorpusEntry("y", "d", (0, 0), "dog bird")]
    index = build_index(entries)
    n, avgdl, k1, b = 2, 2.5, 1.2, 0.75
    idf_cat = math.log(1 + (n - 1 + 0.5) / (1 + 0.5))
    expected = idf_cat * 2 * (k1 + 1) / (2 + k1 * (1 - b + b * 3 / avgdl))
    (hit,) = index.search("cat", 3)
    assert hit[0] == "x" and hit[1] == pytest.approx(expected, rel=1e-12)


@given(st.integers(1, 8), st.integers(0, 5), st.sampled_from(["w1 w2", "w5", "w10 w11 w12 w3"]))
def test_prefix_property(k, extra, query):
    index = build_index(toy_entries(30, seed=3))
    small = index.search(query, k)
    big = index.search(query, k + extra)
    assert big[: len(small)] == small


@given(st.lists(st.integers(1, 9), min_size=1, max_size=6))
def test_coverage_every_sentence_once(lengths):
    docs = [(f"doc{j}", " ".join(f"S{j}x{i} words." for i in range(n))) for j, n in enumerate(lengths)]
    entries = [e for d, t in docs for e in chunk_document(d, t)]
    for (d, t), n in zip(docs, lengths):
        mine = [e for e in entries if e.doc_id == d]
        covered = [i for e in mine for i in range(e.sentence_range[0], e.sentence_range[1] + 1)]
        assert covered == list(range(n))
        assert all(e.sentence_range[1] - e.sentence_range[0] <= 2 for e in mine)
        assert len(mine) == -(-n // 3)


def test_save_load_deterministic(tmp_path, fixture_index):
    a, b = tmp_path / "a.json", tmp_path / "b.json"
    fixture_index.save(a)
    CorpusIndex.load(a).save(b)
    assert a.read_bytes() == b.read_bytes()
    loaded = CorpusIndex.load(b)
    assert loaded.search("Mira Castell violinist", 3) == fixture_index.search("Mira Castell violinist", 3)


def test_load_rejects_unknown_version(tmp_path):
    p = tmp_path / "idx.json"
    p.write_text(json.dumps({"format_version": 99, "entries": []}))
    with pytest.raises(ValueError, match="version"):
        CorpusIndex.load(p)


def fake_embed(texts):
    # bag of first letters: a crude but deterministic embedding
    out = []
    for t in texts:
        v = [0.0] * 26
        for tok in tokenize(t):
            if tok[0].isascii() and tok[0].isalpha():
                v[ord(tok[0]) - 97] += 1.0
        out.append(v)
    return out


def test_embedding_retriever_interface():
    entries = [CorpusEntry("a", "d", (0, 0), "apple avocado"), CorpusEntry("b", "d", (0, 0), "banana blueberry")]
    r = EmbeddingRetriever(entries, fake_embed)
    assert r.search("apricot", 1)[0][0] == "a"
    assert r.get_entry("b").text == "banana blueberry"
    with pytest.raises(NotFound):
        r.get_entry("zzz")


def test_http_embedder_against_mock_endpoint():
    def handler(request):
        body = json.loads(request.content)
        assert request.url.path == "/v1/embeddings" and body["model"] == "m"
        data = [{"index": i, "embedding": v} for i, v in enumerate(fake_embed(body["input"]))][::-1]
        return httpx.Response(200, json={"data": data})

    client = httpx.Client(transport=httpx.MockTransport(handler))
    embed = http_embedder("http://emb.local/v1", "m", client=client)
    assert embed(["apple", "banana"]) == fake_embed(["apple", "banana"])
