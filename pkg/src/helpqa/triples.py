"""Knowledge base of (source, action, target) triples: generation, indexing, retrieval,
and LLM relevance classification.

Each triple captures "the source performs the action upon the target" and stays tied
to the help-page section it was extracted from, so downstream stages can recover the
originating document content.
"""

from __future__ import annotations

import base64
import json
import logging
import re
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from .corpus import Corpus, Section
from .errors import ModelRefusal, SchemaError
from .gateway import ChatRequest, EmbeddingVector, ModelGateway
from .prompts import (
    DEFAULT_PROFILE,
    TEMP_RELEVANCE,
    TEMP_TRIPLE_GENERATION,
    PromptProfile,
    relevance_prompt,
    triple_generation_prompt,
)

logger = logging.getLogger(__name__)

DEFAULT_OVER_RETRIEVE = 20
# Expected triples per section; counts outside the band are logged, not rejected.
TRIPLE_COUNT_BAND = (1, 35)


@dataclass(frozen=True)
class Triple:
    source: str
    action: str
    target: str
    origin: tuple[str, int] | None = None  # (page_url, section_index)

    def __post_init__(self) -> None:
        if not (self.source.strip() and self.action.strip() and self.target.strip()):
            raise ValueError("triple parts must be non-empty")

    def render(self) -> str:
        return f"({self.source}, {self.action}, {self.target})"

    def embedding_text(self) -> str:
        return f"{self.source} {self.action} {self.target}".lower()

    def content_key(self) -> tuple[str, str, str]:
        return (self.source.casefold(), self.action.casefold(), self.target.casefold())


@dataclass(frozen=True)
class ScoredTriple:
    triple: Triple
    score: float


@dataclass(frozen=True)
class TripleIndex:
    entries: tuple[tuple[Triple, EmbeddingVector], ...]
    dim: int

    def __len__(self) -> int:
        return len(self.entries)


@dataclass(frozen=True)
class TripleParse:
    """Outcome of parsing LLM output: recovered triples plus the malformed-line count."""

    triples: tuple[Triple, ...]
    malformed_lines: int


_ENUMERATOR_RE = re.compile(r"^\s*(?:\d+\s*[.)]\s*|[-*•]\s+)")


def _split_top_level(inner: str) -> list[str] | None:
    """Split on commas at parenthesis depth zero; None when nesting is unbalanced."""
    parts: list[str] = []
    buf: list[str] = []
    depth = 0
    for ch in inner:
        if ch == "(":
            depth += 1
        elif ch == ")":
            depth -= 1
            if depth < 0:
                return None
        if ch == "," and depth == 0:
            parts.append("".join(buf))
            buf = []
        else:
            buf.append(ch)
    if depth != 0:
        return None
    parts.append("".join(buf))
    return parts


def _parse_triple_line(line: str) -> tuple[str, str, str] | None:
    core = _ENUMERATOR_RE.sub("", line).strip().rstrip(".,;").strip()
    if not (core.startswith("(") and core.endswith(")")):
        return None
    # The whole remainder must be a single balanced group, not prose with an aside.
    depth = 0
    for i, ch in enumerate(core):
        if ch == "(":
            depth += 1
        elif ch == ")":
            depth -= 1
            if depth == 0 and i != len(core) - 1:
                return None
    parts = _split_top_level(core[1:-1])
    if parts is None or len(parts) != 3:
        return None
    source, action, target = (p.strip() for p in parts)
    if not (source and action and target):
        return None
    return source, action, target


def parse_triples(llm_output: str) -> TripleParse:
    """Extract every well-formed "(a, b, c)" line (exactly two top-level commas).

    Total function: malformed tuple attempts (lines containing "(" that fail the
    contract) are dropped and counted; plain prose lines are ignored.
    """
    triples: list[Triple] = []
    malformed = 0
    for line in llm_output.splitlines():
        if not line.strip():
            continue
        parsed = _parse_triple_line(line)
        if parsed is not None:
            triples.append(Triple(*parsed))
        elif "(" in line:
            malformed += 1
    return TripleParse(triples=tuple(triples), malformed_lines=malformed)


def generate_triples(
    section: Section,
    gateway: ModelGateway,
    profile: PromptProfile = DEFAULT_PROFILE,
    model_id: str = "chat-default",
) -> list[Triple]:
    """Ask the model for knowledge triples covering one section; origins are set.

    Returns [] with a warning when the reply contains no parseable triples.
    Gateway errors propagate.
    """
    if not section.body:
        raise ValueError("section body must be non-empty")
    system, user = triple_generation_prompt(profile, section.body, section.heading)
    reply = gateway.chat(
        ChatRequest(
            model_id=model_id,
            system_prompt=system,
            user_prompt=user,
            temperature=TEMP_TRIPLE_GENERATION,
        )
    )
    parsed = parse_triples(reply)
    if not parsed.triples:
        logger.warning(
            "no parseable triples for section %s (%d malformed lines)",
            section.ref,
            parsed.malformed_lines,
        )
        return []
    lo, hi = TRIPLE_COUNT_BAND
    if not lo <= len(parsed.triples) <= hi:
        logger.warning(
            "section %s yielded %d triples, outside the expected %d-%d band",
            section.ref,
            len(parsed.triples),
            lo,
            hi,
        )
    return [replace(t, origin=section.ref) for t in parsed.triples]


def build_index(
    triples: Sequence[Triple],
    gateway: ModelGateway,
    model_id: str = "embed-default",
) -> TripleIndex:
    """Embed deduplicated triples as "source action target" text into an exact-search index."""
    if not triples:
        raise ValueError("cannot build an index from zero triples")
    unique: list[Triple] = []
    seen: set[tuple[str, str, str]] = set()
    for t in triples:
        if t.origin is None:
            raise ValueError(f"triple {t.render()} has no origin section")
        key = t.content_key()
        if key not in seen:
            seen.add(key)
            unique.append(t)
    vectors = gateway.embed([t.embedding_text() for t in unique], model_id=model_id)
    return TripleIndex(entries=tuple(zip(unique, vectors)), dim=vectors[0].dim)


def _sort_key(item: tuple[Triple, float]) -> tuple[float, str, int, str]:
    triple, score = item
    url, idx = triple.origin if triple.origin is not None else ("", -1)
    return (-score, url, idx, triple.render())


def retrieve_triples(
    query: str,
    index: TripleIndex,
    gateway: ModelGateway,
    m: int = DEFAULT_OVER_RETRIEVE,
    model_id: str = "embed-default",
) -> list[ScoredTriple]:
    """Over-retrieve the top-m triples by cosine similarity to the query (exact search)."""
    if m < 1:
        raise ValueError("m must be >= 1")
    if not index.entries:
        raise ValueError("index is empty")
    qvec = np.asarray(gateway.embed([query], model_id=model_id)[0].values)
    matrix = np.asarray([vec.values for _, vec in index.entries])
    scores = matrix @ qvec
    ranked = sorted(
        ((triple, float(s)) for (triple, _), s in zip(index.entries, scores)),
        key=_sort_key,
    )
    return [ScoredTriple(triple=t, score=s) for t, s in ranked[: min(m, len(ranked))]]


def _normalized_parts(source: str, action: str, target: str) -> tuple[str, str, str]:
    return tuple(" ".join(p.split()).casefold() for p in (source, action, target))  # type: ignore[return-value]


def classify_relevance(
    query: str,
    candidates: Sequence[ScoredTriple],
    gateway: ModelGateway,
    sections: Mapping[tuple[str, int], Section] | None = None,
    profile: PromptProfile = DEFAULT_PROFILE,
    model_id: str = "chat-default",
    max_context_chars: int = 8000,
) -> list[Triple]:
    """Filter candidate triples down to those the model deems relevant to the query.

    The reply is matched back against candidate renderings, so the result is
    structurally a subset of the candidates; an empty result legally signals
    "no relevant knowledge". When a section lookup is supplied, the candidates'
    origin-section bodies are included in the prompt context (truncated to a budget).
    """
    if not candidates:
        raise ValueError("candidates must be non-empty")

    blocks: list[str] = []
    if sections is not None:
        seen_refs: set[tuple[str, int]] = set()
        for cand in candidates:
            ref = cand.triple.origin
            if ref is None or ref in seen_refs:
                continue
            seen_refs.add(ref)
            sec = sections.get(ref)
            if sec is not None and sec.body:
                blocks.append(sec.body)
    doc_blob = "\n---\n".join(blocks)[:max_context_chars]
    triple_lines = "\n".join(f"{i}. {c.triple.render()}" for i, c in enumerate(candidates, 1))
    context = f"{doc_blob}\n\n{triple_lines}" if doc_blob else triple_lines

    system, user = relevance_prompt(profile, query, context)
    reply = gateway.chat(
        ChatRequest(
            model_id=model_id,
            system_prompt=system,
            user_prompt=user,
            temperature=TEMP_RELEVANCE,
        )
    )

    by_content: dict[tuple[str, str, str], Triple] = {}
    for cand in candidates:
        key = _normalized_parts(cand.triple.source, cand.triple.action, cand.triple.target)
        by_content.setdefault(key, cand.triple)

    selected: list[Triple] = []
    picked: set[tuple[str, str, str]] = set()
    for line in reply.splitlines():
        parsed = _parse_triple_line(line)
        if parsed is None:
            continue
        key = _normalized_parts(*parsed)
        if key in by_content and key not in picked:
            picked.add(key)
            selected.append(by_content[key])

    if not selected and "(" in reply:
        logger.warning("relevance reply matched no candidates: %r", reply[:200])
    return selected


def build_kb(
    corpus: Corpus,
    gateway: ModelGateway,
    profile: PromptProfile = DEFAULT_PROFILE,
    chat_model: str = "chat-default",
    embed_model: str = "embed-default",
) -> tuple[list[Triple], TripleIndex]:
    """Generate triples for every corpus section and index them.

    A section whose generation request is refused is skipped with a warning so one
    bad section cannot sink a whole knowledge-base build.
    """
    triples: list[Triple] = []
    for section in corpus.sections:
        if not section.body:
            continue
        try:
            triples.extend(generate_triples(section, gateway, profile=profile, model_id=chat_model))
        except ModelRefusal:
            logger.warning("triple generation refused for section %s; skipping", section.ref)
    if not triples:
        raise ValueError("knowledge-base build produced no triples")
    return triples, build_index(triples, gateway, model_id=embed_model)


def triples_to_jsonl(triples: Sequence[Triple]) -> bytes:
    lines = []
    for t in triples:
        record = {
            "source": t.source,
            "action": t.action,
            "target": t.target,
            "origin": list(t.origin) if t.origin is not None else None,
        }
        lines.append(json.dumps(record, ensure_ascii=False))
    return ("\n".join(lines) + ("\n" if lines else "")).encode("utf-8")


def jsonl_to_triples(stream: bytes | str) -> list[Triple]:
    text = stream.decode("utf-8") if isinstance(stream, bytes) else stream
    out: list[Triple] = []
    for lineno, line in enumerate(text.splitlines(), start=1):
        if not line.strip():
            continue
        try:
            record = json.loads(line)
            origin = record["origin"]
            out.append(
                Triple(
                    source=record["source"],
                    action=record["action"],
                    target=record["target"],
                    origin=(origin[0], origin[1]) if origin is not None else None,
                )
            )
        except (json.JSONDecodeError, KeyError, TypeError, IndexError, ValueError) as e:
            raise SchemaError(f"bad triple record: {e}", line=lineno) from e
    return out


def save_index(index: TripleIndex, path: str | Path) -> None:
    entries = []
    for triple, vec in index.entries:
        raw = base64.b64encode(np.asarray(vec.values, dtype="<f8").tobytes()).decode("ascii")
        entries.append(
            {
                "source": triple.source,
                "action": triple.action,
                "target": triple.target,
                "origin": list(triple.origin) if triple.origin is not None else None,
                "vector": raw,
            }
        )
    Path(path).write_text(
        json.dumps({"dim": index.dim, "entries": entries}, ensure_ascii=False), encoding="utf-8"
    )


def load_index(path: str | Path) -> TripleIndex:
    body = json.loads(Path(path).read_text(encoding="utf-8"))
    dim = body["dim"]
    entries = []
    for e in body["entries"]:
        values = np.frombuffer(base64.b64decode(e["vector"]), dtype="<f8")
        if len(values) != dim:
            raise SchemaError(f"vector length {len(values)} does not match dim {dim}")
        origin = e["origin"]
        triple = Triple(
            source=e["source"],
            action=e["action"],
            target=e["target"],
            origin=(origin[0], origin[1]) if origin is not None else None,
        )
        entries.append((triple, EmbeddingVector(values=tuple(float(v) for v in values))))
    return TripleIndex(entries=tuple(entries), dim=dim)
