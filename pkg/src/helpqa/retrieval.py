"""Section retrieval: Okapi BM25 over an inverted index, and dense cosine search.

Both retrievers rank whole corpus sections and return the top-k contexts with
1-based ranks. Search is exact (no ANN structures): corpora here are thousands of
sections at most, and exactness keeps the ranking verifiable by brute force.
"""

from __future__ import annotations

import base64
import json
import math
import re
from collections import Counter, defaultdict
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .corpus import Corpus, Section
from .errors import SchemaError
from .gateway import EmbeddingVector, ModelGateway

DEFAULT_K = 3
BM25_K1 = 1.2
BM25_B = 0.75
# Embedding input per section is heading + newline + body, capped to this length.
EMBED_INPUT_MAX_CHARS = 6000

_TOKEN_RE = re.compile(r"[^\W_]+", re.UNICODE)


def tokenize(text: str) -> list[str]:
    """Lowercase and split on non-alphanumeric characters, dropping empty tokens."""
    return _TOKEN_RE.findall(text.lower())


@dataclass(frozen=True)
class RetrievedContext:
    section: Section
    score: float
    rank: int


def _ranked(scored: list[tuple[Section, float]], k: int) -> list[RetrievedContext]:
    # Ties broken by (page_url, section_index) ascending for a total, documented order.
    scored.sort(key=lambda item: (-item[1], item[0].page_url, item[0].section_index))
    return [
        RetrievedContext(section=s, score=score, rank=i)
        for i, (s, score) in enumerate(scored[:k], start=1)
    ]


@dataclass(frozen=True)
class Bm25Index:
    sections: tuple[Section, ...]
    postings: dict[str, tuple[tuple[int, int], ...]]  # term -> ((section position, tf), ...)
    doc_lengths: tuple[int, ...]
    avg_doc_length: float
    n_docs: int
    k1: float = BM25_K1
    b: float = BM25_B

    def idf(self, term: str) -> float:
        """Non-negative IDF: ln((n - df + 0.5) / (df + 0.5) + 1)."""
        df = len(self.postings.get(term, ()))
        return math.log((self.n_docs - df + 0.5) / (df + 0.5) + 1.0)


def bm25_build(corpus: Corpus, k1: float = BM25_K1, b: float = BM25_B) -> Bm25Index:
    if not corpus.sections:
        raise ValueError("corpus must be non-empty")
    postings: dict[str, list[tuple[int, int]]] = defaultdict(list)
    doc_lengths: list[int] = []
    for pos, section in enumerate(corpus.sections):
        tokens = tokenize(section.body)
        doc_lengths.append(len(tokens))
        for term, tf in sorted(Counter(tokens).items()):
            postings[term].append((pos, tf))
    return Bm25Index(
        sections=corpus.sections,
        postings={t: tuple(p) for t, p in postings.items()},
        doc_lengths=tuple(doc_lengths),
        avg_doc_length=sum(doc_lengths) / len(doc_lengths),
        n_docs=len(doc_lengths),
        k1=k1,
        b=b,
    )


def bm25_scores(index: Bm25Index, query: str) -> dict[int, float]:
    """Score every section containing at least one query term.

    score(d) = sum over query tokens t of
        IDF(t) * tf(t,d) * (k1 + 1) / (tf(t,d) + k1 * (1 - b + b * len(d)/avg_len))

    Query tokens are a multiset: a term repeated in the query contributes once per
    occurrence.
    """
    scores: dict[int, float] = defaultdict(float)
    for term in tokenize(query):
        posting = index.postings.get(term)
        if not posting:
            continue
        idf = index.idf(term)
        for pos, tf in posting:
            norm = 1.0 - index.b + index.b * index.doc_lengths[pos] / index.avg_doc_length
            scores[pos] += idf * (tf * (index.k1 + 1.0)) / (tf + index.k1 * norm)
    return dict(scores)


def bm25_search(index: Bm25Index, query: str, k: int = DEFAULT_K) -> list[RetrievedContext]:
    """Top-k sections by BM25 score; sections matching no query term are omitted."""
    if k < 1:
        raise ValueError("k must be >= 1")
    scored = [(index.sections[pos], s) for pos, s in bm25_scores(index, query).items() if s > 0.0]
    return _ranked(scored, k)


@dataclass(frozen=True)
class DenseIndex:
    entries: tuple[tuple[Section, EmbeddingVector], ...]
    dim: int


def embedding_input(section: Section, max_chars: int = EMBED_INPUT_MAX_CHARS) -> str:
    return f"{section.heading}\n{section.body}"[:max_chars]


def dense_build(
    corpus: Corpus,
    gateway: ModelGateway,
    model_id: str = "embed-default",
    max_chars: int = EMBED_INPUT_MAX_CHARS,
) -> DenseIndex:
    if not corpus.sections:
        raise ValueError("corpus must be non-empty")
    texts = [embedding_input(s, max_chars) for s in corpus.sections]
    vectors = gateway.embed(texts, model_id=model_id)
    return DenseIndex(entries=tuple(zip(corpus.sections, vectors)), dim=vectors[0].dim)


def dense_scores(index: DenseIndex, query: str, gateway: ModelGateway, model_id: str = "embed-default") -> list[float]:
    qvec = np.asarray(gateway.embed([query], model_id=model_id)[0].values)
    matrix = np.asarray([vec.values for _, vec in index.entries])
    return [float(s) for s in matrix @ qvec]


def dense_search(
    index: DenseIndex,
    query: str,
    gateway: ModelGateway,
    k: int = DEFAULT_K,
    model_id: str = "embed-default",
) -> list[RetrievedContext]:
    """Exact cosine top-k over all index entries."""
    if k < 1:
        raise ValueError("k must be >= 1")
    scores = dense_scores(index, query, gateway, model_id=model_id)
    scored = [(section, score) for (section, _), score in zip(index.entries, scores)]
    return _ranked(scored, k)


def _section_dict(s: Section) -> dict:
    return {
        "page_url": s.page_url,
        "section_index": s.section_index,
        "heading": s.heading,
        "body": s.body,
        "word_count": s.word_count,
    }


def _section_from_dict(d: dict) -> Section:
    return Section(
        page_url=d["page_url"],
        section_index=d["section_index"],
        heading=d["heading"],
        body=d["body"],
        word_count=d["word_count"],
    )


def save_bm25(index: Bm25Index, path: str | Path) -> None:
    body = {
        "k1": index.k1,
        "b": index.b,
        "n_docs": index.n_docs,
        "avg_doc_length": index.avg_doc_length,
        "doc_lengths": list(index.doc_lengths),
        "sections": [_section_dict(s) for s in index.sections],
        "postings": {t: [list(p) for p in ps] for t, ps in sorted(index.postings.items())},
    }
    Path(path).write_text(json.dumps(body, ensure_ascii=False), encoding="utf-8")


def load_bm25(path: str | Path) -> Bm25Index:
    try:
        body = json.loads(Path(path).read_text(encoding="utf-8"))
        return Bm25Index(
            sections=tuple(_section_from_dict(d) for d in body["sections"]),
            postings={t: tuple((p[0], p[1]) for p in ps) for t, ps in body["postings"].items()},
            doc_lengths=tuple(body["doc_lengths"]),
            avg_doc_length=body["avg_doc_length"],
            n_docs=body["n_docs"],
            k1=body["k1"],
            b=body["b"],
        )
    except (json.JSONDecodeError, KeyError, TypeError, IndexError) as e:
        raise SchemaError(f"bad BM25 index file {path}: {e}") from e


def save_dense(index: DenseIndex, path: str | Path) -> None:
    entries = []
    for section, vec in index.entries:
        raw = base64.b64encode(np.asarray(vec.values, dtype="<f8").tobytes()).decode("ascii")
        entries.append({"section": _section_dict(section), "vector": raw})
    Path(path).write_text(
        json.dumps({"dim": index.dim, "entries": entries}, ensure_ascii=False), encoding="utf-8"
    )


def load_dense(path: str | Path) -> DenseIndex:
    try:
        body = json.loads(Path(path).read_text(encoding="utf-8"))
        dim = body["dim"]
        entries = []
        for e in body["entries"]:
            values = np.frombuffer(base64.b64decode(e["vector"]), dtype="<f8")
            if len(values) != dim:
                raise SchemaError(f"vector length {len(values)} does not match dim {dim}")
            entries.append(
                (_section_from_dict(e["section"]), EmbeddingVector(values=tuple(float(v) for v in values)))
            )
        return DenseIndex(entries=tuple(entries), dim=dim)
    except (json.JSONDecodeError, KeyError, TypeError, IndexError) as e:
        raise SchemaError(f"bad dense index file {path}: {e}") from e
