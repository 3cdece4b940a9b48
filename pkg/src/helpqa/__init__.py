"""helpqa: retrieval-augmented QA over product help corpora.

User queries are reformulated with knowledge triples mined from the corpus by an
LLM, retrieved against BM25 or dense section indexes, answered by a generator, and
scored by retrieval and answer-quality metrics. The harness reproduces the full
baseline / ablation / oracle experiment matrix offline against a scripted mock
model backend or live against any OpenAI-compatible endpoint.
"""

from .corpus import (
    Corpus,
    CorpusStats,
    Section,
    corpus_to_jsonl,
    jsonl_to_corpus,
    load_corpus,
    parse_page,
)
from .errors import (
    ConfigError,
    EmptyPage,
    EnhancementFailure,
    GatewayError,
    HelpQAError,
    JudgeParseFailure,
    ManifestMismatch,
    ModelRefusal,
    PositionOutOfRange,
    RateLimited,
    SchemaError,
    TransportError,
    UnscoredRecord,
    UnscriptedPrompt,
)
from .gateway import (
    ChatRequest,
    EmbeddingVector,
    MockBackend,
    ModelGateway,
    OpenAIHttpBackend,
    ResponseCache,
)
from .generation import AnswerRecord, generate_answer, place_gold_at
from .harness import (
    Diagnostic,
    ExperimentConfig,
    RunManifest,
    RunResult,
    positional_sweep,
    qa_load,
    qa_validate,
    run_experiment,
    run_matrix,
)
from .metrics import (
    MetricsReport,
    QAPair,
    QueryRunRecord,
    aggregate,
    geval,
    hit_at_k,
    ndcg_at_k,
    rouge_l,
    semantic_sim,
)
from .prompts import DEFAULT_PROFILE, PROMPT_VERSION, PromptProfile
from .reform import ReformMode, ReformRecord, enhance_query, reformulate
from .retrieval import (
    Bm25Index,
    DenseIndex,
    RetrievedContext,
    bm25_build,
    bm25_search,
    dense_build,
    dense_search,
)
from .triples import (
    ScoredTriple,
    Triple,
    TripleIndex,
    build_index,
    build_kb,
    classify_relevance,
    generate_triples,
    parse_triples,
    retrieve_triples,
)

__version__ = "0.1.0"
