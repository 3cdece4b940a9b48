"""Retrieval and answer metrics, plus per-run aggregation.

Retrieval: top-k hit rate (page-level match) and binary-relevance NDCG.
Answers: ROUGE-L (LCS F-measure), sentence-embedding cosine similarity (a
BERTScore substitute; flagged as such in every report), and an LLM-judge score
mapped from a 1-5 rating onto [0, 1].
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass
from typing import Iterable, Sequence
from urllib.parse import urlparse

from .errors import JudgeParseFailure, UnscoredRecord
from .gateway import ChatRequest, ModelGateway
from .generation import AnswerRecord
from .prompts import TEMP_JUDGE, judge_prompt, judge_retry_prompt
from .reform import ReformRecord
from .retrieval import RetrievedContext

SEMANTIC_SIM_METHOD = "sentence-embedding cosine (BERTScore-substitute)"

SCORE_FIELDS = ("ndcg", "rouge_l", "semantic_sim", "geval")


@dataclass(frozen=True)
class QAPair:
    """One benchmark item: question, gold long-form answer, gold page URL(s)."""

    qid: str
    question: str
    gold_answer: str
    gold_urls: frozenset[str]

    def __post_init__(self) -> None:
        if not self.gold_answer:
            raise ValueError("gold_answer must be non-empty")
        if not self.gold_urls:
            raise ValueError("gold_urls must be non-empty")
        for url in self.gold_urls:
            parsed = urlparse(url)
            if not (parsed.scheme and parsed.netloc):
                raise ValueError(f"gold_url {url!r} is not a well-formed absolute URL")


@dataclass
class QueryRunRecord:
    """Everything one query produced in a run; scores appear only after evaluation.

    The top-k hit is always derived from the stored contexts, never cached as a field.
    """

    qa: "QAPair"
    k: int
    reform: ReformRecord
    contexts: tuple[RetrievedContext, ...]
    answer: AnswerRecord
    scores: dict[str, float] | None = None
    degraded: bool = False

    def hit(self) -> bool:
        return hit_at_k(self.contexts, self.qa.gold_urls, self.k)


@dataclass(frozen=True)
class MetricsReport:
    label: str
    hit_rate: float
    ndcg: float
    rouge_l: float
    semantic_sim: float
    geval: float
    n_queries: int

    def to_dict(self) -> dict:
        return {
            "label": self.label,
            "semantic_sim_method": SEMANTIC_SIM_METHOD,
            "hit_rate": self.hit_rate,
            "ndcg": self.ndcg,
            "rouge_l": self.rouge_l,
            "semantic_sim": self.semantic_sim,
            "geval": self.geval,
            "n_queries": self.n_queries,
        }


def hit_at_k(contexts: Sequence[RetrievedContext], gold_urls: Iterable[str], k: int) -> bool:
    """True iff any of the first k contexts comes from a gold page."""
    if k < 1:
        raise ValueError("k must be >= 1")
    gold = set(gold_urls)
    return any(c.section.page_url in gold for c in contexts[:k])


def ndcg_at_k(
    contexts: Sequence[RetrievedContext],
    gold_urls: Iterable[str],
    k: int,
    n_retrievable: int | None = None,
) -> float:
    """Binary-relevance NDCG over the first k contexts.

    A context is relevant when it is the first retrieved section of a gold page
    (each gold page earns credit once, keeping the score in [0, 1] even when several
    sections of one page are retrieved). The ideal ranking places all retrievable
    gold pages at the top; pass `n_retrievable` to bound that by corpus coverage,
    else all gold_urls count. Returns 0 when nothing relevant is retrievable.
    """
    if k < 1:
        raise ValueError("k must be >= 1")
    gold = set(gold_urls)
    n_rel = len(gold) if n_retrievable is None else min(n_retrievable, len(gold))

    dcg = 0.0
    credited: set[str] = set()
    for i, c in enumerate(contexts[:k], start=1):
        url = c.section.page_url
        if url in gold and url not in credited:
            credited.add(url)
            dcg += 1.0 / math.log2(i + 1)
    idcg = sum(1.0 / math.log2(i + 1) for i in range(1, min(k, n_rel) + 1))
    return dcg / idcg if idcg > 0 else 0.0


def _lcs_length(a: list[str], b: list[str]) -> int:
    if not a or not b:
        return 0
    prev = [0] * (len(b) + 1)
    for x in a:
        cur = [0]
        for j, y in enumerate(b, start=1):
            if x == y:
                cur.append(prev[j - 1] + 1)
            else:
                cur.append(max(prev[j], cur[j - 1]))
        prev = cur
    return prev[-1]


def rouge_l(candidate: str, reference: str) -> float:
    """LCS-based F-measure with beta = 1 (harmonic mean of precision and recall).

    Tokenization is lowercase whitespace split; empty inputs yield 0.
    """
    cand = candidate.lower().split()
    ref = reference.lower().split()
    if not cand or not ref:
        return 0.0
    lcs = _lcs_length(cand, ref)
    if lcs == 0:
        return 0.0
    precision = lcs / len(cand)
    recall = lcs / len(ref)
    return 2 * precision * recall / (precision + recall)


def semantic_sim(
    candidate: str,
    reference: str,
    gateway: ModelGateway,
    model_id: str = "embed-default",
) -> float:
    """Cosine similarity of the two sentence embeddings, clamped to [-1, 1]."""
    if not candidate or not reference:
        raise ValueError("candidate and reference must be non-empty")
    vecs = gateway.embed([candidate, reference], model_id=model_id)
    return max(-1.0, min(1.0, vecs[0].dot(vecs[1])))


_RATING_ONLY_RE = re.compile(r"^\s*([1-5])\s*$")
_RATING_LABEL_RE = re.compile(r"(?:rating|score)\s*[:=]?\s*([1-5])\b", re.IGNORECASE)
_RATING_ANY_RE = re.compile(r"\b([1-5])\b")


def _parse_rating(reply: str) -> int | None:
    m = _RATING_ONLY_RE.match(reply)
    if m:
        return int(m.group(1))
    m = _RATING_LABEL_RE.search(reply)
    if m:
        return int(m.group(1))
    hits = _RATING_ANY_RE.findall(reply)
    if hits:
        return int(hits[-1])  # a chatty judge usually concludes with the rating
    return None


def geval(
    question: str,
    gold_answer: str,
    candidate: str,
    gateway: ModelGateway,
    model_id: str = "judge-default",
) -> float:
    """LLM-judge similarity: integer rating 1-5 mapped linearly onto [0, 1].

    An unparseable reply triggers one stricter retry, then JudgeParseFailure.
    """
    system, user = judge_prompt(question, gold_answer, candidate)
    reply = gateway.chat(
        ChatRequest(model_id=model_id, system_prompt=system, user_prompt=user, temperature=TEMP_JUDGE)
    )
    rating = _parse_rating(reply)
    if rating is None:
        system, user = judge_retry_prompt(question, gold_answer, candidate)
        reply = gateway.chat(
            ChatRequest(model_id=model_id, system_prompt=system, user_prompt=user, temperature=TEMP_JUDGE)
        )
        rating = _parse_rating(reply)
    if rating is None:
        raise JudgeParseFailure(f"judge reply had no 1-5 rating: {reply[:120]!r}")
    return (rating - 1) / 4


def aggregate(records: Sequence[QueryRunRecord], label: str) -> MetricsReport:
    """Arithmetic means of per-query scores; hit is derived from contexts, not stored."""
    if not records:
        raise ValueError("cannot aggregate zero records")
    for r in records:
        if r.scores is None:
            raise UnscoredRecord(f"record {r.qa.qid} has not been scored")
        missing = [f for f in SCORE_FIELDS if f not in r.scores]
        if missing:
            raise UnscoredRecord(f"record {r.qa.qid} is missing scores: {missing}")
    n = len(records)

    def mean(field: str) -> float:
        return sum(r.scores[field] for r in records) / n

    return MetricsReport(
        label=label,
        hit_rate=sum(1.0 for r in records if r.hit()) / n,
        ndcg=mean("ndcg"),
        rouge_l=mean("rouge_l"),
        semantic_sim=mean("semantic_sim"),
        geval=mean("geval"),
        n_queries=n,
    )
