"""Shared fixtures: synthetic corpora, QA sets, and the fully scripted pipeline mock."""

from __future__ import annotations

import re

import pytest

from helpqa.corpus import Corpus, Section, make_corpus
from helpqa.gateway import MockBackend, ModelGateway
from helpqa.metrics import QAPair

TOPIC_RE = re.compile(r"topic\d+x\d+")

BASE_URL = "https://help.example.com"


def page_url(p: int) -> str:
    return f"{BASE_URL}/page{p}"


def topic(p: int, s: int) -> str:
    return f"topic{p}x{s}"


def toy_corpus(n_pages: int = 6, per_page: int = 2) -> Corpus:
    """Corpus whose every section carries a unique topic token, so BM25 retrieval is
    exact and mock replies can be derived from the prompt text."""
    sections = []
    for p in range(n_pages):
        for s in range(per_page):
            tok = topic(p, s)
            heading = f"How to {tok}"
            body = f"To {tok} open the {tok} panel and press the {tok} button."
            sections.append(Section(page_url(p), s, heading, body, len(body.split())))
    return make_corpus(sections)


def gold_answer_for(tok: str) -> str:
    return f"1. Open the {tok} panel. 2. Press the {tok} button."


def toy_qa(n: int = 10, per_page: int = 2) -> list[QAPair]:
    """n questions, two per page, so a 6-page corpus keeps page 5 gold-free."""
    pairs = []
    for i in range(n):
        p, s = divmod(i, per_page)
        tok = topic(p, s)
        pairs.append(
            QAPair(
                qid=f"q{i}",
                question=f"how do i {tok}",
                gold_answer=gold_answer_for(tok),
                gold_urls=frozenset({page_url(p)}),
            )
        )
    return pairs


def pipeline_script() -> list[tuple[str, object]]:
    """Full scripting of every pipeline stage, keyed on prompt markers.

    Replies are derived from the prompt so each section/query gets distinct,
    deterministic content: triples carry the section's topic token, the enhancer
    echoes the query unchanged, and the answer repeats the top context's token.
    """

    def gen_triples(text: str) -> str:
        tok = TOPIC_RE.search(text.split("Context:", 1)[1]).group(0)
        return f"1. ({tok} panel, open, {tok} document)\n2. ({tok} button, press, {tok} dialog)"

    def classify(text: str) -> str:
        first = re.search(r"\n1\. (\(.+?\))(?:\n|$)", text)
        return f"1. {first.group(1)}"

    def enhance(text: str) -> str:
        query = re.search(
            r"reformulate the query below\.\nGiven Query: (.*)\nTuples:", text
        ).group(1)
        return f"Reformulated Query: {query}"

    def plain(text: str) -> str:
        return re.search(r'Query to be enhanced: "(.*)"', text).group(1)

    def answer(text: str) -> str:
        context = text.split("Context:", 1)[1]
        m = TOPIC_RE.search(context)
        return gold_answer_for(m.group(0)) if m else "Content not found"

    return [
        ("generate tuples of the form (source, action, target)", gen_triples),
        ("classify which of the data elements", classify),
        ("variable 'Tuples'", enhance),
        ("Query to be enhanced:", plain),
        ("could not be parsed as a rating", "3"),
        ("Respond with only the integer rating", "4"),
        ("as numbered steps", answer),
    ]


def make_gateway(
    script=None,
    embedding_dim: int = 64,
    cache_dir=None,
    **gateway_kwargs,
) -> tuple[ModelGateway, MockBackend]:
    mock = MockBackend(script=script or [], embedding_dim=embedding_dim)
    gateway_kwargs.setdefault("sleeper", lambda s: None)
    return ModelGateway(mock, cache_dir=cache_dir, **gateway_kwargs), mock


@pytest.fixture
def corpus() -> Corpus:
    return toy_corpus()


@pytest.fixture
def qa_pairs() -> list[QAPair]:
    return toy_qa()


@pytest.fixture
def scripted_gateway(tmp_path):
    return make_gateway(script=pipeline_script(), cache_dir=tmp_path / "cache")
