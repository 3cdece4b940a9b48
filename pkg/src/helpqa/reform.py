"""Query reformulation: turn the user query into the retrieval query.

Five modes cover the experiment matrix: no reformulation, plain LLM rewriting,
the full triple pipeline (retrieve, classify, enhance), the classifier ablation
(all retrieved triples fed straight to the enhancer), and the oracle upper bound
(triples generated from the query's gold sections only).

A reformulation failure never blocks retrieval: the record degrades to the
original query with a flag.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from enum import Enum
from typing import Mapping, Sequence

from .corpus import Section
from .errors import EnhancementFailure, HelpQAError
from .gateway import ChatRequest, ModelGateway
from .prompts import (
    DEFAULT_PROFILE,
    TEMP_ENHANCEMENT,
    PromptProfile,
    enhancement_prompt,
    plain_reform_prompt,
)
from .triples import (
    DEFAULT_OVER_RETRIEVE,
    ScoredTriple,
    Triple,
    TripleIndex,
    classify_relevance,
    generate_triples,
    retrieve_triples,
)

logger = logging.getLogger(__name__)


class ReformMode(str, Enum):
    NONE = "none"
    PLAIN_LLM = "plain_llm"
    TRIPLES = "triples"
    ORACLE_TRIPLES = "oracle_triples"
    TRIPLES_NO_CLASSIFIER = "triples_no_classifier"

    @classmethod
    def parse(cls, value: "str | ReformMode") -> "ReformMode":
        if isinstance(value, ReformMode):
            return value
        try:
            return cls(value.strip().lower())
        except ValueError:
            valid = ", ".join(m.value for m in cls)
            raise ValueError(f"unknown reform mode {value!r}; expected one of: {valid}") from None


@dataclass(frozen=True)
class ReformRecord:
    """Audit trail of one reformulation: the full path from user query to retrieval query."""

    original_query: str
    mode: ReformMode
    retrieved_triples: tuple[ScoredTriple, ...] = ()
    relevant_triples: tuple[Triple, ...] = ()
    final_query: str = ""
    degraded: bool = False

    def to_dict(self) -> dict:
        return {
            "original_query": self.original_query,
            "mode": self.mode.value,
            "retrieved_triples": [
                {"triple": _triple_dict(st.triple), "score": st.score}
                for st in self.retrieved_triples
            ],
            "relevant_triples": [_triple_dict(t) for t in self.relevant_triples],
            "final_query": self.final_query,
            "degraded": self.degraded,
        }


def _triple_dict(t: Triple) -> dict:
    return {
        "source": t.source,
        "action": t.action,
        "target": t.target,
        "origin": list(t.origin) if t.origin is not None else None,
    }


def _sanitize_reply(reply: str) -> str:
    """Single-line the reply and strip label prefixes and wrapping quotes."""
    lines = [ln.strip() for ln in reply.splitlines() if ln.strip()]
    # Drop lines that are only punctuation noise
    lines = [ln for ln in lines if any(ch.isalnum() for ch in ln)]
    if not lines:
        return ""
    text = lines[0]
    lowered = text.lower()
    for prefix in ("reformulated query:", "query:", "enhanced query:", "rewritten query:"):
        if lowered.startswith(prefix):
            text = text[len(prefix):].strip()
            break
    while len(text) >= 2 and text[0] == text[-1] and text[0] in "\"'":
        text = text[1:-1].strip()
    return text


def enhance_query(
    query: str,
    triples: Sequence[Triple],
    gateway: ModelGateway,
    profile: PromptProfile = DEFAULT_PROFILE,
    model_id: str = "chat-default",
) -> str:
    """Rewrite the query using the supplied triples (which may be empty).

    Raises EnhancementFailure when the model output sanitizes to nothing, signaling
    the caller to fall back to the original query.
    """
    tuples_text = ",".join(t.render() for t in triples) if triples else "(none)"
    system, user = enhancement_prompt(profile, query, tuples_text)
    reply = gateway.chat(
        ChatRequest(
            model_id=model_id,
            system_prompt=system,
            user_prompt=user,
            temperature=TEMP_ENHANCEMENT,
        )
    )
    text = _sanitize_reply(reply)
    if not text:
        raise EnhancementFailure("enhancement output was empty after sanitation")
    return text


def _plain_reformulate(
    query: str,
    gateway: ModelGateway,
    profile: PromptProfile,
    model_id: str,
) -> str:
    system, user = plain_reform_prompt(profile, query)
    reply = gateway.chat(
        ChatRequest(
            model_id=model_id,
            system_prompt=system,
            user_prompt=user,
            temperature=TEMP_ENHANCEMENT,
        )
    )
    text = _sanitize_reply(reply)
    if not text:
        raise EnhancementFailure("plain reformulation output was empty after sanitation")
    return text


def reformulate(
    query: str,
    mode: ReformMode,
    gateway: ModelGateway,
    index: TripleIndex | None = None,
    gold_sections: Sequence[Section] | None = None,
    sections: Mapping[tuple[str, int], Section] | None = None,
    m: int = DEFAULT_OVER_RETRIEVE,
    profile: PromptProfile = DEFAULT_PROFILE,
    chat_model: str = "chat-default",
    embed_model: str = "embed-default",
) -> ReformRecord:
    """Produce the retrieval query for one user query under the given mode.

    Mode requirements: TRIPLES and TRIPLES_NO_CLASSIFIER need the knowledge-base
    `index`; ORACLE_TRIPLES needs the query's `gold_sections`. Any stage failure
    degrades to the original query rather than raising.
    """
    if mode == ReformMode.NONE:
        return ReformRecord(original_query=query, mode=mode, final_query=query)

    if mode == ReformMode.TRIPLES and index is None:
        raise ValueError("TRIPLES mode requires a triple index")
    if mode == ReformMode.TRIPLES_NO_CLASSIFIER and index is None:
        raise ValueError("TRIPLES_NO_CLASSIFIER mode requires a triple index")
    if mode == ReformMode.ORACLE_TRIPLES and gold_sections is None:
        raise ValueError("ORACLE_TRIPLES mode requires the query's gold sections")

    retrieved: tuple[ScoredTriple, ...] = ()
    relevant: tuple[Triple, ...] = ()
    try:
        if mode == ReformMode.PLAIN_LLM:
            final = _plain_reformulate(query, gateway, profile, chat_model)
            return ReformRecord(original_query=query, mode=mode, final_query=final)

        if mode == ReformMode.TRIPLES:
            retrieved = tuple(retrieve_triples(query, index, gateway, m=m, model_id=embed_model))
            relevant = tuple(
                classify_relevance(
                    query, retrieved, gateway,
                    sections=sections, profile=profile, model_id=chat_model,
                )
            ) if retrieved else ()
        elif mode == ReformMode.TRIPLES_NO_CLASSIFIER:
            retrieved = tuple(retrieve_triples(query, index, gateway, m=m, model_id=embed_model))
            relevant = tuple(st.triple for st in retrieved)
        elif mode == ReformMode.ORACLE_TRIPLES:
            generated: list[Triple] = []
            for section in gold_sections:
                if section.body:
                    generated.extend(
                        generate_triples(section, gateway, profile=profile, model_id=chat_model)
                    )
            retrieved = tuple(ScoredTriple(triple=t, score=1.0) for t in generated)
            relevant = tuple(
                classify_relevance(
                    query, retrieved, gateway,
                    sections=sections, profile=profile, model_id=chat_model,
                )
            ) if retrieved else ()

        final = enhance_query(query, relevant, gateway, profile=profile, model_id=chat_model)
        return ReformRecord(
            original_query=query,
            mode=mode,
            retrieved_triples=retrieved,
            relevant_triples=relevant,
            final_query=final,
        )
    except HelpQAError as e:
        logger.warning("reformulation degraded to original query (%s): %s", mode.value, e)
        return ReformRecord(
            original_query=query,
            mode=mode,
            retrieved_triples=retrieved,
            relevant_triples=relevant,
            final_query=query,
            degraded=True,
        )
