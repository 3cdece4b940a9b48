"""Answer generation from retrieved contexts, plus gold-position manipulation for
the context-position sensitivity sweep."""

from __future__ import annotations

import logging
from dataclasses import dataclass

from .corpus import Section
from .errors import GatewayError, PositionOutOfRange
from .gateway import ChatRequest, ModelGateway
from .prompts import DEFAULT_PROFILE, TEMP_ANSWER, PromptProfile, answer_prompt
from .retrieval import RetrievedContext

logger = logging.getLogger(__name__)

# Serialized context budget; lower-ranked contexts are truncated first.
CONTEXT_CHAR_BUDGET = 24000


@dataclass(frozen=True)
class AnswerRecord:
    question: str
    final_query: str
    contexts: tuple[RetrievedContext, ...]
    answer: str
    degraded: bool = False

    def to_dict(self) -> dict:
        return {
            "question": self.question,
            "final_query": self.final_query,
            "contexts": [
                {
                    "page_url": c.section.page_url,
                    "section_index": c.section.section_index,
                    "rank": c.rank,
                    "score": c.score,
                }
                for c in self.contexts
            ],
            "answer": self.answer,
            "degraded": self.degraded,
        }


def serialize_contexts(contexts: tuple[RetrievedContext, ...] | list[RetrievedContext],
                       char_budget: int = CONTEXT_CHAR_BUDGET) -> str:
    """Render contexts in rank order, each with its page URL.

    When the total exceeds the budget, bodies are trimmed starting from the last
    rank so the top context is truncated last.
    """
    bodies = [c.section.body for c in contexts]
    overhead = sum(
        len(f"[{i}] {c.section.page_url}\n\n\n") + len(c.section.heading)
        for i, c in enumerate(contexts, start=1)
    )
    excess = overhead + sum(len(b) for b in bodies) - char_budget
    for i in range(len(bodies) - 1, -1, -1):
        if excess <= 0:
            break
        cut = min(excess, len(bodies[i]))
        bodies[i] = bodies[i][: len(bodies[i]) - cut]
        excess -= cut
    blocks = []
    for i, (c, body) in enumerate(zip(contexts, bodies), start=1):
        heading = f" {c.section.heading}" if c.section.heading else ""
        blocks.append(f"[{i}] {c.section.page_url}{heading}\n{body}")
    return "\n\n".join(blocks) if blocks else "(no context retrieved)"


def generate_answer(
    question: str,
    contexts: list[RetrievedContext] | tuple[RetrievedContext, ...],
    gateway: ModelGateway,
    final_query: str | None = None,
    profile: PromptProfile = DEFAULT_PROFILE,
    model_id: str = "chat-default",
) -> AnswerRecord:
    """Generate a long-form procedural answer conditioned on the contexts.

    The prompt carries the contexts exactly in the given order, each with its page
    URL. Gateway failure (after the gateway's own retries) yields a degraded record
    with an empty answer instead of raising.
    """
    contexts = tuple(contexts)
    system, user = answer_prompt(profile, question, serialize_contexts(contexts))
    try:
        answer = gateway.chat(
            ChatRequest(
                model_id=model_id,
                system_prompt=system,
                user_prompt=user,
                temperature=TEMP_ANSWER,
            )
        )
    except GatewayError as e:
        logger.warning("answer generation degraded for %r: %s", question[:80], e)
        return AnswerRecord(
            question=question,
            final_query=final_query if final_query is not None else question,
            contexts=contexts,
            answer="",
            degraded=True,
        )
    return AnswerRecord(
        question=question,
        final_query=final_query if final_query is not None else question,
        contexts=contexts,
        answer=answer,
        degraded=False,
    )


def place_gold_at(
    contexts: list[RetrievedContext] | tuple[RetrievedContext, ...],
    gold: Section,
    position: int,
) -> list[RetrievedContext]:
    """Force the gold section to occupy exactly `position` (1-based).

    Any prior occurrence of the gold section is removed first; the other contexts
    keep their relative order and the result never exceeds the original context
    count (or `position`, when inserting at the end of a shorter list). Ranks are
    renumbered consecutively.
    """
    contexts = list(contexts)
    prior = [c for c in contexts if c.section.ref == gold.ref]
    present = bool(prior)
    limit = len(contexts) if present else len(contexts) + 1
    if not 1 <= position <= limit:
        raise PositionOutOfRange(
            f"position {position} out of range 1..{limit} "
            f"(gold {'present' if present else 'absent'} in {len(contexts)} contexts)"
        )
    others = [c for c in contexts if c.section.ref != gold.ref]
    gold_score = prior[0].score if present else 0.0
    placed = others[: position - 1] + [RetrievedContext(section=gold, score=gold_score, rank=0)] + others[position - 1:]
    capacity = max(len(contexts), position)
    placed = placed[:capacity]
    return [
        RetrievedContext(section=c.section, score=c.score, rank=i)
        for i, c in enumerate(placed, start=1)
    ]
