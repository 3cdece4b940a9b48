"""Prompt catalog for every LLM stage, parameterized by product vocabulary.

Templates carry <ANGLE BRACKET> slots filled by the builder functions. Product
words (the application name and the brand words scrubbed from generated text)
are template parameters so the same pipeline runs against different help corpora.
"""

from __future__ import annotations

from dataclasses import dataclass

from .gateway import ChatRequest

PROMPT_VERSION = "1"

# Stage temperatures: deterministic everywhere except answer generation.
TEMP_TRIPLE_GENERATION = 0.0
TEMP_RELEVANCE = 0.0
TEMP_ENHANCEMENT = 0.0
TEMP_JUDGE = 0.0
TEMP_ANSWER = 0.2


@dataclass(frozen=True)
class PromptProfile:
    """Product vocabulary injected into the templates."""

    product_name: str = "Adobe Acrobat"
    vendor: str = "Adobe"
    # Words the triple generator must keep out of generated tuples.
    triple_scrub_words: tuple[str, ...] = ("Adobe", "PDF", "Acrobat")
    # Words the query enhancer must keep out of the rewritten query.
    query_scrub_words: tuple[str, ...] = ("Adobe", "Acrobat")


DEFAULT_PROFILE = PromptProfile()


def _word_list(words: tuple[str, ...]) -> str:
    quoted = [f'"{w}"' for w in words]
    if len(quoted) == 1:
        return quoted[0]
    if len(quoted) == 2:
        return f"{quoted[0]} and {quoted[1]}"
    return ", ".join(quoted[:-1]) + f", and {quoted[-1]}"


_TRIPLE_GENERATION_SYSTEM = (
    "You are an assistant for the <PRODUCT> application that helps create tuples of "
    "the form (source, action, target) based on the information given to you."
)

_TRIPLE_GENERATION_USER = """You are given a section from an <VENDOR> help document. Extrapolate the most relevant relationships you can from the context and generate tuples of the form (source, action, target). Ensure that the sources, actions, and targets are directly present in the provided context.
You must use only the provided data in variable 'Context' to identify relationships.
You must not use any other information from any other source or from previous knowledge beyond the provided 'Context'.
Example: If the document contained the phrase "To edit the image, first click on the triple line menu", one relevant tuple would be (triple line menu, edit, image). Here, the source of the action (editing the image) is the triple line menu. The direct effect of this action is on the image, hence that is the target. In a similar manner, create tuples for the provided context.
Context: <CONTEXT>
Constraints:
1. The created tuples must form the same format as the example provided.
2. The source and target in the tuple must only reference objects or menu items, and no actions
3. Ensure that the tuples generated are all related to the title of the section: <SECTION HEADER>
4. Only generate the most relevant tuples for the provided document with the given section header
5. You must make the contents of the tuples short and concise
6. Ensure the words <SCRUB WORDS> are not in the generated tuples."""

_RELEVANCE_SYSTEM = (
    "You are an assistant for the <PRODUCT> application. You are designed to filter "
    "out the information provided and classify what is most relevant to the given query."
)

_RELEVANCE_USER = """A user has provided you with the following query: <USER QUERY>
Use the data given in the variable 'Context' to classify which of the data elements are most relevant to the user's query.
Data in the 'Context' variable is of the form (source, action, target), where the first value contains the source of the action that is directed towards the target.
Example: One data element could be (triple line menu, edit, image). If the query was asking about how to edit an image, this element would be relevant. However, if the query was instead asking how to edit a video, it would be very irrelevant, and hence should not be included. The presence of a query word in the tuple does not make it relevant, look at the meaning as well when you are considering relevance. In a similar manner, filter out the context for the provided document.
Context: <CONTEXT>
Constraints:
1. Retrieve the data elements that are most relevant to the action that the user is trying to do in the query provided.
2. Ensure that the source and target of the data elements retrieved are similar to what is present in the query.
3. Give the most relevant data elements in a numbered list, and only provide the data elements themselves. No explanation."""

_ENHANCEMENT_SYSTEM = "You are an assistant that is designed to only enhance user queries."

_ENHANCEMENT_USER = """You are given a query by the user and you must enhance the query by only using the data provided in variable 'Tuples'. The 'Tuples' variable is of the form (source, action, target).
Constraints:
1. Rephrase the query using the provided tuples, but do not change the meaning of the initial query.
2. Only use information from the tuples that are relevant to the query to reform the query.
3. Make the rewritten query one sentence at most.
4. Re-write the query in a manner similar to how a human might search for an answer on a help page. Keep the query short.
5. Only reformulate the given query, without answering it.
6. You must not use any other information from any other source or from previous knowledge beyond the provided 'Tuples'.
7. Ensure the words <SCRUB WORDS> are not in the query.
8. Only answer with one reformulated query. Example:
Given Query: 'how to remove letters from a text box'
Tuples: (text, delete key, remove),(page thumbnail, delete key, remove), (text, font item, edit), (text, font item, remove)
Reformulated Query: how to delete text
In a similar manner, reformulate the query below.
Given Query: <USER QUERY>
Tuples: <TUPLES>
Reformulated Query:"""

_PLAIN_REFORM_SYSTEM = (
    "You are an assistant for the <VENDOR> application that is designed to only "
    "enhance user queries. When asked about anything that does not relate to "
    "<VENDOR>, only reply with 'Content not found'"
)

_PLAIN_REFORM_USER = """You are asked a question by the user and you must enhance the query. Do not answer the query, only change it's wording.
You must not use any other information from any other source or from previous knowledge beyond the query provided.
Understand what might be the cause of confusion, and rewrite the query by trying to model what the user could have been asking.
Ensure that the reformulated query is bound by the given constraints.
Query to be enhanced: "<USER QUERY>"
Constraints:
1. Make the rewritten query one sentence at most.
2. Make sure that the rewritten query does not have any excessive adjectives, and is short and to the point.
3. Only reformulate it, without answering it.
4. Only answer with the reformulated query."""

_ANSWER_SYSTEM = (
    "You are a helpful assistant for the <PRODUCT> application. You answer how-to "
    "questions with clear numbered steps, using only the help content provided to you."
)

_ANSWER_USER = """Question: <QUESTION>

Context:
<CONTEXTS>

Answer the question using only the provided context, as numbered steps. If the context does not contain the answer, reply with 'Content not found'."""

_JUDGE_SYSTEM = (
    "You are a strict evaluator comparing a candidate answer against a reference answer."
)

_JUDGE_USER = """Question: <QUESTION>
Reference answer: <REFERENCE>
Candidate answer: <CANDIDATE>

Rate how well the candidate answer matches the reference answer in correctness and completeness, on a scale from 1 to 5 where 1 means completely wrong and 5 means fully equivalent. Respond with only the integer rating and nothing else."""

_JUDGE_RETRY_USER = """Your previous reply could not be parsed as a rating.
Question: <QUESTION>
Reference answer: <REFERENCE>
Candidate answer: <CANDIDATE>

Respond with exactly one integer between 1 and 5 and no other text."""


def triple_generation_prompt(profile: PromptProfile, body: str, heading: str) -> tuple[str, str]:
    system = _TRIPLE_GENERATION_SYSTEM.replace("<PRODUCT>", profile.product_name)
    user = (
        _TRIPLE_GENERATION_USER.replace("<VENDOR>", profile.vendor)
        .replace("<CONTEXT>", body)
        .replace("<SECTION HEADER>", heading)
        .replace("<SCRUB WORDS>", _word_list(profile.triple_scrub_words))
    )
    return system, user


def relevance_prompt(profile: PromptProfile, query: str, context: str) -> tuple[str, str]:
    system = _RELEVANCE_SYSTEM.replace("<PRODUCT>", profile.product_name)
    user = _RELEVANCE_USER.replace("<USER QUERY>", query).replace("<CONTEXT>", context)
    return system, user


def enhancement_prompt(profile: PromptProfile, query: str, tuples_text: str) -> tuple[str, str]:
    user = (
        _ENHANCEMENT_USER.replace("<SCRUB WORDS>", _word_list(profile.query_scrub_words))
        .replace("<USER QUERY>", query)
        .replace("<TUPLES>", tuples_text)
    )
    return _ENHANCEMENT_SYSTEM, user


def plain_reform_prompt(profile: PromptProfile, query: str) -> tuple[str, str]:
    system = _PLAIN_REFORM_SYSTEM.replace("<VENDOR>", profile.vendor)
    user = _PLAIN_REFORM_USER.replace("<USER QUERY>", query)
    return system, user


def answer_prompt(profile: PromptProfile, question: str, contexts_block: str) -> tuple[str, str]:
    system = _ANSWER_SYSTEM.replace("<PRODUCT>", profile.product_name)
    user = _ANSWER_USER.replace("<QUESTION>", question).replace("<CONTEXTS>", contexts_block)
    return system, user


def judge_prompt(question: str, reference: str, candidate: str) -> tuple[str, str]:
    user = (
        _JUDGE_USER.replace("<QUESTION>", question)
        .replace("<REFERENCE>", reference)
        .replace("<CANDIDATE>", candidate)
    )
    return _JUDGE_SYSTEM, user


def judge_retry_prompt(question: str, reference: str, candidate: str) -> tuple[str, str]:
    user = (
        _JUDGE_RETRY_USER.replace("<QUESTION>", question)
        .replace("<REFERENCE>", reference)
        .replace("<CANDIDATE>", candidate)
    )
    return _JUDGE_SYSTEM, user


# Markers identifying which stage produced a request; used for trace analysis.
_STAGE_MARKERS = (
    ("triple_generation", "generate tuples of the form (source, action, target)"),
    ("relevance_classification", "classify which of the data elements"),
    ("query_enhancement", "variable 'Tuples'"),
    ("plain_reformulation", "Query to be enhanced:"),
    ("answer_generation", "as numbered steps"),
    ("judge", "Respond with only the integer rating"),
    ("judge_retry", "could not be parsed as a rating"),
)


def classify_request(req: ChatRequest) -> str:
    """Name the pipeline stage a chat request belongs to ("unknown" if none match)."""
    text = f"{req.system_prompt}\n{req.user_prompt}"
    for stage, marker in _STAGE_MARKERS:
        if marker in text:
            return stage
    return "unknown"
