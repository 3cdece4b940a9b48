"""Configuration-driven experiment runner: single runs, the comparison matrix, and
the gold-position sensitivity sweep.

Each run executes reformulate -> retrieve -> generate -> score for every QA pair and
emits reform.jsonl, answers.jsonl, scores.jsonl, report.json (timestamp-free, so warm
-cache reruns are byte-identical), an aligned report.txt, and manifest.json.
"""

from __future__ import annotations

import hashlib
import json
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from datetime import datetime, timezone
from pathlib import Path

from .corpus import Corpus, Section, corpus_to_jsonl, jsonl_to_corpus, load_corpus
from .errors import (
    ConfigError,
    GatewayError,
    HelpQAError,
    JudgeParseFailure,
    PositionOutOfRange,
    SchemaError,
)
from .gateway import MockBackend, ModelGateway, OpenAIHttpBackend
from .generation import AnswerRecord, generate_answer, place_gold_at
from .metrics import (
    QAPair,
    MetricsReport,
    QueryRunRecord,
    aggregate,
    geval,
    ndcg_at_k,
    rouge_l,
    semantic_sim,
)
from .prompts import PROMPT_VERSION, PromptProfile
from .reform import ReformMode, reformulate
from .retrieval import (
    bm25_build,
    bm25_scores,
    bm25_search,
    dense_build,
    dense_scores,
    dense_search,
    save_bm25,
    save_dense,
)
from .triples import build_kb, save_index, triples_to_jsonl

logger = logging.getLogger(__name__)

RETRIEVERS = ("bm25", "dense")
BACKENDS = ("openai", "mock")

QA_REQUIRED_KEYS = ("qid", "question", "gold_answer", "gold_urls")
QA_OPTIONAL_KEYS = ("composite",)


@dataclass(frozen=True)
class ExperimentConfig:
    """One experiment row: retriever kind x reformulation mode x model settings x k."""

    label: str
    retriever: str
    reform_mode: ReformMode
    qa_path: str = ""
    corpus_jsonl: str | None = None
    corpus_dir: str | None = None
    k: int = 3
    m_over_retrieve: int = 20
    chat_model: str = "chat-default"
    embed_model: str = "embed-default"
    judge_model: str = "judge-default"
    cache_dir: str | None = None
    seed: int = 0
    concurrency: int = 1
    # The generator sees the original user question by default; flip to experiment
    # with feeding it the reformulated query instead.
    generator_uses_reformulated: bool = False
    product_name: str = "Adobe Acrobat"
    vendor: str = "Adobe"
    triple_scrub_words: tuple[str, ...] = ("Adobe", "PDF", "Acrobat")
    query_scrub_words: tuple[str, ...] = ("Adobe", "Acrobat")
    backend: str = "openai"
    mock_script_path: str | None = None
    mock_embedding_dim: int = 64

    def validate(self, need_corpus_path: bool = False, need_qa_path: bool = False) -> None:
        if not self.label:
            raise ConfigError("label must be non-empty")
        if self.retriever not in RETRIEVERS:
            raise ConfigError(f"retriever must be one of {RETRIEVERS}, got {self.retriever!r}")
        if self.backend not in BACKENDS:
            raise ConfigError(f"backend must be one of {BACKENDS}, got {self.backend!r}")
        if self.k < 1:
            raise ConfigError("k must be >= 1")
        if self.m_over_retrieve < 1:
            raise ConfigError("m_over_retrieve must be >= 1")
        if self.concurrency < 1:
            raise ConfigError("concurrency must be >= 1")
        if need_qa_path and not self.qa_path:
            raise ConfigError("qa_path is required")
        if need_corpus_path and not (self.corpus_jsonl or self.corpus_dir):
            raise ConfigError("one of corpus_jsonl or corpus_dir is required")

    @classmethod
    def from_dict(cls, raw: dict) -> "ExperimentConfig":
        known = {f.name for f in cls.__dataclass_fields__.values()}  # type: ignore[attr-defined]
        unknown = set(raw) - known
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        data = dict(raw)
        if "reform_mode" in data:
            try:
                data["reform_mode"] = ReformMode.parse(data["reform_mode"])
            except ValueError as e:
                raise ConfigError(str(e)) from e
        for key in ("triple_scrub_words", "query_scrub_words"):
            if key in data:
                data[key] = tuple(data[key])
        try:
            return cls(**data)
        except TypeError as e:
            raise ConfigError(f"bad config: {e}") from e

    @classmethod
    def from_file(cls, path: str | Path) -> "ExperimentConfig":
        raw = json.loads(Path(path).read_text(encoding="utf-8"))
        if not isinstance(raw, dict):
            raise ConfigError("config file must hold a JSON object")
        return cls.from_dict(raw)

    def profile(self) -> PromptProfile:
        return PromptProfile(
            product_name=self.product_name,
            vendor=self.vendor,
            triple_scrub_words=self.triple_scrub_words,
            query_scrub_words=self.query_scrub_words,
        )

    def snapshot(self) -> dict:
        return {
            "label": self.label,
            "retriever": self.retriever,
            "reform_mode": self.reform_mode.value,
            "qa_path": self.qa_path,
            "corpus_jsonl": self.corpus_jsonl,
            "corpus_dir": self.corpus_dir,
            "k": self.k,
            "m_over_retrieve": self.m_over_retrieve,
            "chat_model": self.chat_model,
            "embed_model": self.embed_model,
            "judge_model": self.judge_model,
            "cache_dir": self.cache_dir,
            "seed": self.seed,
            "concurrency": self.concurrency,
            "generator_uses_reformulated": self.generator_uses_reformulated,
            "product_name": self.product_name,
            "vendor": self.vendor,
            "triple_scrub_words": list(self.triple_scrub_words),
            "query_scrub_words": list(self.query_scrub_words),
            "backend": self.backend,
            "mock_script_path": self.mock_script_path,
            "mock_embedding_dim": self.mock_embedding_dim,
        }


def build_gateway(config: ExperimentConfig) -> ModelGateway:
    if config.backend == "mock":
        script: list[tuple[str, str]] = []
        if config.mock_script_path:
            raw = json.loads(Path(config.mock_script_path).read_text(encoding="utf-8"))
            script = [(str(p), str(r)) for p, r in raw]
        backend = MockBackend(
            script=script, embedding_dim=config.mock_embedding_dim, seed=config.seed
        )
    else:
        backend = OpenAIHttpBackend.from_env()
    return ModelGateway(backend, cache_dir=config.cache_dir)


@dataclass(frozen=True)
class Diagnostic:
    kind: str
    message: str
    line: int | None = None
    qid: str | None = None


def _qa_record(line: str, lineno: int) -> dict:
    try:
        record = json.loads(line)
    except json.JSONDecodeError as e:
        raise SchemaError(f"invalid JSON: {e.msg}", line=lineno) from e
    if not isinstance(record, dict):
        raise SchemaError("expected a JSON object", line=lineno)
    allowed = set(QA_REQUIRED_KEYS) | set(QA_OPTIONAL_KEYS)
    missing = [k for k in QA_REQUIRED_KEYS if k not in record]
    if missing:
        raise SchemaError(f"missing keys: {missing}", line=lineno)
    unexpected = sorted(set(record) - allowed)
    if unexpected:
        raise SchemaError(f"unexpected keys: {unexpected}", line=lineno)
    if not isinstance(record["qid"], str) or not record["qid"]:
        raise SchemaError("qid must be a non-empty string", line=lineno)
    if not isinstance(record["question"], str) or not record["question"]:
        raise SchemaError("question must be a non-empty string", line=lineno)
    if not isinstance(record["gold_answer"], str) or not record["gold_answer"]:
        raise SchemaError("gold_answer must be a non-empty string", line=lineno)
    urls = record["gold_urls"]
    if not isinstance(urls, list) or not urls or not all(isinstance(u, str) and u for u in urls):
        raise SchemaError("gold_urls must be a non-empty list of strings", line=lineno)
    if "composite" in record and not isinstance(record["composite"], bool):
        raise SchemaError("composite must be a boolean", line=lineno)
    return record


def qa_load(path: str | Path) -> list[QAPair]:
    """Load benchmark QA pairs from JSONL.

    Records flagged "composite": true are excluded from runs (logged); schema
    violations and duplicate qids raise SchemaError with the line number.
    """
    pairs: list[QAPair] = []
    seen: set[str] = set()
    text = Path(path).read_text(encoding="utf-8")
    for lineno, line in enumerate(text.splitlines(), start=1):
        if not line.strip():
            continue
        record = _qa_record(line, lineno)
        if record["qid"] in seen:
            raise SchemaError(f"duplicate qid {record['qid']!r}", line=lineno)
        seen.add(record["qid"])
        if record.get("composite", False):
            logger.info("excluding composite question %s", record["qid"])
            continue
        try:
            pairs.append(
                QAPair(
                    qid=record["qid"],
                    question=record["question"],
                    gold_answer=record["gold_answer"],
                    gold_urls=frozenset(record["gold_urls"]),
                )
            )
        except ValueError as e:
            raise SchemaError(str(e), line=lineno) from e
    return pairs


def qa_validate(path: str | Path, corpus: Corpus | None = None) -> list[Diagnostic]:
    """Report QA-file problems without raising: schema issues, composite questions,
    and gold URLs absent from the corpus (when a corpus is supplied)."""
    diagnostics: list[Diagnostic] = []
    seen: set[str] = set()
    corpus_pages = corpus.page_urls() if corpus is not None else None
    text = Path(path).read_text(encoding="utf-8")
    for lineno, line in enumerate(text.splitlines(), start=1):
        if not line.strip():
            continue
        try:
            record = _qa_record(line, lineno)
        except SchemaError as e:
            diagnostics.append(Diagnostic(kind="schema", message=str(e), line=lineno))
            continue
        qid = record["qid"]
        if qid in seen:
            diagnostics.append(
                Diagnostic(kind="duplicate_qid", message=f"duplicate qid {qid!r}", line=lineno, qid=qid)
            )
            continue
        seen.add(qid)
        if record.get("composite", False):
            diagnostics.append(
                Diagnostic(
                    kind="composite_question",
                    message=f"composite question {qid!r} is excluded from runs",
                    line=lineno,
                    qid=qid,
                )
            )
        try:
            QAPair(
                qid=qid,
                question=record["question"],
                gold_answer=record["gold_answer"],
                gold_urls=frozenset(record["gold_urls"]),
            )
        except ValueError as e:
            diagnostics.append(Diagnostic(kind="schema", message=str(e), line=lineno, qid=qid))
            continue
        if corpus_pages is not None:
            for url in record["gold_urls"]:
                if url not in corpus_pages:
                    diagnostics.append(
                        Diagnostic(
                            kind="unknown_url",
                            message=f"gold_url {url!r} of {qid!r} is not in the corpus",
                            line=lineno,
                            qid=qid,
                        )
                    )
    return diagnostics


@dataclass
class RunManifest:
    label: str
    config: dict
    corpus_hash: str
    index_hashes: dict[str, str]
    prompt_version: str
    created_at: str
    artifacts: dict[str, str]
    n_queries: int
    n_degraded: int

    def to_dict(self) -> dict:
        return {
            "label": self.label,
            "config": self.config,
            "corpus_hash": self.corpus_hash,
            "index_hashes": self.index_hashes,
            "prompt_version": self.prompt_version,
            "created_at": self.created_at,
            "artifacts": self.artifacts,
            "n_queries": self.n_queries,
            "n_degraded": self.n_degraded,
        }


@dataclass
class RunResult:
    report: MetricsReport
    manifest: RunManifest
    records: list[QueryRunRecord]
    out_dir: Path

    @property
    def n_degraded(self) -> int:
        return self.manifest.n_degraded


def _sha256(data: bytes) -> str:
    return hashlib.sha256(data).hexdigest()


def _write_jsonl(path: Path, rows: list[dict]) -> None:
    text = "".join(json.dumps(r, ensure_ascii=False, sort_keys=True) + "\n" for r in rows)
    path.write_text(text, encoding="utf-8")


def _load_corpus_from_config(config: ExperimentConfig) -> Corpus:
    if config.corpus_jsonl:
        return jsonl_to_corpus(Path(config.corpus_jsonl).read_bytes())
    if config.corpus_dir:
        return load_corpus(config.corpus_dir)
    raise ConfigError("config names no corpus source")


class _Runtime:
    """Shared per-run state: corpus, indexes, and the knowledge base when needed."""

    def __init__(
        self,
        config: ExperimentConfig,
        gateway: ModelGateway,
        corpus: Corpus,
        out_dir: Path,
    ):
        self.config = config
        self.gateway = gateway
        self.corpus = corpus
        self.profile = config.profile()
        self.section_lookup = corpus.section_lookup()
        self.corpus_pages = corpus.page_urls()
        self.index_hashes: dict[str, str] = {}

        if config.retriever == "bm25":
            self.bm25 = bm25_build(corpus)
            self.dense = None
            path = out_dir / "bm25_index.json"
            save_bm25(self.bm25, path)
            self.index_hashes["bm25_index.json"] = _sha256(path.read_bytes())
        else:
            self.bm25 = None
            self.dense = dense_build(corpus, gateway, model_id=config.embed_model)
            path = out_dir / "dense_index.json"
            save_dense(self.dense, path)
            self.index_hashes["dense_index.json"] = _sha256(path.read_bytes())

        self.kb_index = None
        if config.reform_mode in (ReformMode.TRIPLES, ReformMode.TRIPLES_NO_CLASSIFIER):
            kb_triples, self.kb_index = build_kb(
                corpus,
                gateway,
                profile=self.profile,
                chat_model=config.chat_model,
                embed_model=config.embed_model,
            )
            triples_path = out_dir / "triples.jsonl"
            triples_path.write_bytes(triples_to_jsonl(kb_triples))
            index_path = out_dir / "triple_index.json"
            save_index(self.kb_index, index_path)
            self.index_hashes["triples.jsonl"] = _sha256(triples_path.read_bytes())
            self.index_hashes["triple_index.json"] = _sha256(index_path.read_bytes())

    def search(self, query: str):
        if self.bm25 is not None:
            return bm25_search(self.bm25, query, k=self.config.k)
        return dense_search(self.dense, query, self.gateway, k=self.config.k, model_id=self.config.embed_model)

    def section_scores(self, query: str) -> dict[tuple[str, int], float]:
        """Retriever score for every corpus section (sections scoring zero included)."""
        if self.bm25 is not None:
            by_pos = bm25_scores(self.bm25, query)
            return {
                s.ref: by_pos.get(pos, 0.0) for pos, s in enumerate(self.corpus.sections)
            }
        scores = dense_scores(self.dense, query, self.gateway, model_id=self.config.embed_model)
        return {entry[0].ref: s for entry, s in zip(self.dense.entries, scores)}

    def gold_sections(self, pair: QAPair) -> list[Section]:
        return [s for s in self.corpus.sections if s.page_url in pair.gold_urls]

    def reform(self, pair: QAPair):
        cfg = self.config
        gold = self.gold_sections(pair) if cfg.reform_mode == ReformMode.ORACLE_TRIPLES else None
        return reformulate(
            pair.question,
            cfg.reform_mode,
            self.gateway,
            index=self.kb_index,
            gold_sections=gold,
            sections=self.section_lookup,
            m=cfg.m_over_retrieve,
            profile=self.profile,
            chat_model=cfg.chat_model,
            embed_model=cfg.embed_model,
        )

    def generate(self, pair: QAPair, reform_record, contexts) -> AnswerRecord:
        cfg = self.config
        question = reform_record.final_query if cfg.generator_uses_reformulated else pair.question
        return generate_answer(
            question,
            contexts,
            self.gateway,
            final_query=reform_record.final_query,
            profile=self.profile,
            model_id=cfg.chat_model,
        )

    def score(self, pair: QAPair, contexts, answer: AnswerRecord) -> tuple[dict[str, float], bool]:
        cfg = self.config
        n_retrievable = len(pair.gold_urls & self.corpus_pages)
        scores = {
            "ndcg": ndcg_at_k(contexts, pair.gold_urls, cfg.k, n_retrievable=n_retrievable),
            "rouge_l": rouge_l(answer.answer, pair.gold_answer),
        }
        degraded = False
        if not answer.answer.strip():
            scores["semantic_sim"] = 0.0
            scores["geval"] = 0.0
            return scores, degraded
        try:
            scores["semantic_sim"] = semantic_sim(
                answer.answer, pair.gold_answer, self.gateway, model_id=cfg.embed_model
            )
        except GatewayError as e:
            logger.warning("semantic_sim degraded for %s: %s", pair.qid, e)
            scores["semantic_sim"] = 0.0
            degraded = True
        try:
            scores["geval"] = geval(
                pair.question, pair.gold_answer, answer.answer, self.gateway, model_id=cfg.judge_model
            )
        except (GatewayError, JudgeParseFailure) as e:
            logger.warning("geval degraded for %s: %s", pair.qid, e)
            scores["geval"] = 0.0
            degraded = True
        return scores, degraded

    def run_one(self, pair: QAPair) -> QueryRunRecord:
        reform_record = self.reform(pair)
        contexts = tuple(self.search(reform_record.final_query))
        answer = self.generate(pair, reform_record, contexts)
        scores, scoring_degraded = self.score(pair, contexts, answer)
        return QueryRunRecord(
            qa=pair,
            k=self.config.k,
            reform=reform_record,
            contexts=contexts,
            answer=answer,
            scores=scores,
            degraded=reform_record.degraded or answer.degraded or scoring_degraded,
        )


def run_experiment(
    config: ExperimentConfig,
    out_root: str | Path,
    gateway: ModelGateway | None = None,
    corpus: Corpus | None = None,
    qa_pairs: list[QAPair] | None = None,
) -> RunResult:
    """Execute one experiment config end to end and write its run artifacts.

    `gateway`, `corpus`, and `qa_pairs` may be injected (tests, matrix runs); by
    default they are built from the config. Fails fast on config errors; per-query
    model errors degrade that query's record and the run completes.
    """
    config.validate(need_corpus_path=corpus is None, need_qa_path=qa_pairs is None)
    gateway = gateway if gateway is not None else build_gateway(config)
    corpus = corpus if corpus is not None else _load_corpus_from_config(config)
    qa_pairs = qa_pairs if qa_pairs is not None else qa_load(config.qa_path)
    if not qa_pairs:
        raise ConfigError("no usable QA pairs to run")
    if not corpus.sections:
        raise ConfigError("corpus has no sections")

    out_dir = Path(out_root) / config.label
    out_dir.mkdir(parents=True, exist_ok=True)

    runtime = _Runtime(config, gateway, corpus, out_dir)

    if config.concurrency > 1:
        with ThreadPoolExecutor(max_workers=config.concurrency) as pool:
            records = list(pool.map(runtime.run_one, qa_pairs))
    else:
        records = [runtime.run_one(p) for p in qa_pairs]

    report = aggregate(records, config.label)
    n_degraded = sum(1 for r in records if r.degraded)

    artifacts = _write_run_artifacts(out_dir, config, records, report, n_degraded)
    manifest = RunManifest(
        label=config.label,
        config=config.snapshot(),
        corpus_hash=_sha256(corpus_to_jsonl(corpus)),
        index_hashes=runtime.index_hashes,
        prompt_version=PROMPT_VERSION,
        created_at=datetime.now(timezone.utc).isoformat(),
        artifacts=artifacts,
        n_queries=len(records),
        n_degraded=n_degraded,
    )
    (out_dir / "manifest.json").write_text(
        json.dumps(manifest.to_dict(), ensure_ascii=False, sort_keys=True, indent=2) + "\n",
        encoding="utf-8",
    )
    return RunResult(report=report, manifest=manifest, records=records, out_dir=out_dir)


def _write_run_artifacts(
    out_dir: Path,
    config: ExperimentConfig,
    records: list[QueryRunRecord],
    report: MetricsReport,
    n_degraded: int,
) -> dict[str, str]:
    _write_jsonl(
        out_dir / "reform.jsonl",
        [{"qid": r.qa.qid, **r.reform.to_dict()} for r in records],
    )
    _write_jsonl(
        out_dir / "answers.jsonl",
        [{"qid": r.qa.qid, **r.answer.to_dict()} for r in records],
    )
    _write_jsonl(
        out_dir / "scores.jsonl",
        [
            {
                "qid": r.qa.qid,
                "hit": r.hit(),
                "degraded": r.degraded,
                **{k: r.scores[k] for k in sorted(r.scores)},
            }
            for r in records
        ],
    )
    report_body = {
        **report.to_dict(),
        "n_degraded": n_degraded,
        "prompt_version": PROMPT_VERSION,
        "config": config.snapshot(),
    }
    (out_dir / "report.json").write_text(
        json.dumps(report_body, ensure_ascii=False, sort_keys=True, indent=2) + "\n",
        encoding="utf-8",
    )
    (out_dir / "report.txt").write_text(render_table([(config, report, None)]), encoding="utf-8")
    return {
        name: str(out_dir / name)
        for name in ("reform.jsonl", "answers.jsonl", "scores.jsonl", "report.json", "report.txt")
    }


_TABLE_COLUMNS = ("label", "retriever", "reform", "hit rate", "rouge-l", "semsim", "g-eval", "ndcg")


def render_table(rows: list[tuple[ExperimentConfig, MetricsReport | None, str | None]]) -> str:
    """Aligned plain-text comparison table, one row per config."""
    cells: list[list[str]] = [list(_TABLE_COLUMNS)]
    for config, report, error in rows:
        if report is None:
            cells.append(
                [config.label, config.retriever, config.reform_mode.value, f"error: {error}", "", "", "", ""]
            )
        else:
            cells.append(
                [
                    config.label,
                    config.retriever,
                    config.reform_mode.value,
                    f"{report.hit_rate * 100:.1f}%",
                    f"{report.rouge_l:.3f}",
                    f"{report.semantic_sim:.3f}",
                    f"{report.geval:.3f}",
                    f"{report.ndcg:.3f}",
                ]
            )
    widths = [max(len(row[i]) for row in cells) for i in range(len(_TABLE_COLUMNS))]
    lines = []
    for idx, row in enumerate(cells):
        lines.append("  ".join(cell.ljust(widths[i]) for i, cell in enumerate(row)).rstrip())
        if idx == 0:
            lines.append("  ".join("-" * widths[i] for i in range(len(widths))))
    return "\n".join(lines) + "\n"


@dataclass
class MatrixResult:
    rows: list[tuple[ExperimentConfig, MetricsReport | None, str | None]]
    table_text: str
    out_dir: Path

    @property
    def reports(self) -> list[MetricsReport]:
        return [r for _, r, _ in self.rows if r is not None]


def run_matrix(
    configs: list[ExperimentConfig],
    out_root: str | Path,
    gateway: ModelGateway | None = None,
    corpus: Corpus | None = None,
    qa_pairs: list[QAPair] | None = None,
) -> MatrixResult:
    """Run every config and render the comparison table (text + JSON).

    Duplicate labels are a config error raised before any run; a failed run becomes
    a row annotation instead of aborting the matrix.
    """
    if not configs:
        raise ConfigError("matrix needs at least one config")
    labels = [c.label for c in configs]
    dupes = sorted({l for l in labels if labels.count(l) > 1})
    if dupes:
        raise ConfigError(f"duplicate config labels: {dupes}")

    out_root = Path(out_root)
    out_root.mkdir(parents=True, exist_ok=True)
    rows: list[tuple[ExperimentConfig, MetricsReport | None, str | None]] = []
    for config in configs:
        try:
            result = run_experiment(
                config, out_root, gateway=gateway, corpus=corpus, qa_pairs=qa_pairs
            )
            rows.append((config, result.report, None))
        except HelpQAError as e:
            logger.error("run %s failed: %s", config.label, e)
            rows.append((config, None, str(e)))

    table_text = render_table(rows)
    (out_root / "matrix.txt").write_text(table_text, encoding="utf-8")
    matrix_json = [
        {
            "label": config.label,
            "retriever": config.retriever,
            "reform_mode": config.reform_mode.value,
            **({"error": error} if error is not None else report.to_dict()),
        }
        for config, report, error in rows
    ]
    (out_root / "matrix.json").write_text(
        json.dumps(matrix_json, ensure_ascii=False, sort_keys=True, indent=2) + "\n",
        encoding="utf-8",
    )
    return MatrixResult(rows=rows, table_text=table_text, out_dir=out_root)


@dataclass
class SweepResult:
    rows: list[tuple[int, float, float]]  # (position, mean_geval, mean_semsim)
    n_skipped: int
    csv_path: Path


def positional_sweep(
    config: ExperimentConfig,
    positions: list[int],
    out_root: str | Path,
    gateway: ModelGateway | None = None,
    corpus: Corpus | None = None,
    qa_pairs: list[QAPair] | None = None,
) -> SweepResult:
    """Measure answer quality as a function of the gold context's position.

    For each query and position p the retrieved contexts are rewritten by
    place_gold_at(..., p), the answer regenerated, and judged; the output is the
    mean judge score (and semantic similarity) per position, written as CSV.
    Queries whose gold pages have no section in the corpus are skipped and counted.
    """
    config.validate(need_corpus_path=corpus is None, need_qa_path=qa_pairs is None)
    if not positions:
        raise PositionOutOfRange("positions must be non-empty")
    bad = [p for p in positions if not 1 <= p <= config.k]
    if bad:
        raise PositionOutOfRange(f"positions {bad} outside 1..{config.k}")

    gateway = gateway if gateway is not None else build_gateway(config)
    corpus = corpus if corpus is not None else _load_corpus_from_config(config)
    qa_pairs = qa_pairs if qa_pairs is not None else qa_load(config.qa_path)
    if not qa_pairs:
        raise ConfigError("no usable QA pairs to run")

    out_dir = Path(out_root) / config.label
    out_dir.mkdir(parents=True, exist_ok=True)
    runtime = _Runtime(config, gateway, corpus, out_dir)

    sums = {p: [0.0, 0.0] for p in positions}
    n_evaluated = 0
    n_skipped = 0
    for pair in qa_pairs:
        gold_sections = runtime.gold_sections(pair)
        if not gold_sections:
            n_skipped += 1
            continue
        reform_record = runtime.reform(pair)
        contexts = tuple(runtime.search(reform_record.final_query))
        scores = runtime.section_scores(reform_record.final_query)
        # The gold document enters as its best-scoring section under this retriever.
        best_gold = sorted(
            gold_sections, key=lambda s: (-scores.get(s.ref, 0.0), s.page_url, s.section_index)
        )[0]
        try:
            placements = {p: place_gold_at(contexts, best_gold, p) for p in positions}
        except PositionOutOfRange:
            # Too few contexts to host the requested position (sparse BM25 corner).
            n_skipped += 1
            continue
        n_evaluated += 1
        for p, placed in placements.items():
            answer = runtime.generate(pair, reform_record, tuple(placed))
            if answer.answer.strip():
                g = geval(
                    pair.question, pair.gold_answer, answer.answer, gateway, model_id=config.judge_model
                )
                s = semantic_sim(answer.answer, pair.gold_answer, gateway, model_id=config.embed_model)
            else:
                g, s = 0.0, 0.0
            sums[p][0] += g
            sums[p][1] += s

    rows = [
        (p, sums[p][0] / n_evaluated if n_evaluated else 0.0, sums[p][1] / n_evaluated if n_evaluated else 0.0)
        for p in positions
    ]
    csv_path = out_dir / "sweep.csv"
    lines = ["position,mean_geval,mean_semsim"]
    lines += [f"{p},{g},{s}" for p, g, s in rows]
    csv_path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    return SweepResult(rows=rows, n_skipped=n_skipped, csv_path=csv_path)
