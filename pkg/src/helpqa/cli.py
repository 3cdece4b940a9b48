"""Command-line interface.

Subcommands: ingest, kb build/query, index build/search, run, matrix, sweep, validate.
Exit codes: 0 success, 1 config error, 2 run completed with degraded queries.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from . import harness
from .corpus import corpus_to_jsonl, jsonl_to_corpus, load_corpus
from .errors import ConfigError, HelpQAError
from .harness import ExperimentConfig, build_gateway, positional_sweep, qa_load, qa_validate
from .reform import ReformMode
from .retrieval import bm25_build, bm25_search, dense_build, dense_search, load_bm25, load_dense, save_bm25, save_dense
from .triples import build_kb, load_index, retrieve_triples, save_index, triples_to_jsonl

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_CONFIG_ERROR = 1
EXIT_PARTIAL_RUN = 2


def _gateway_config(args: argparse.Namespace) -> ExperimentConfig:
    """Minimal config carrying just the gateway/model settings from common flags."""
    return ExperimentConfig(
        label="cli",
        retriever="dense",
        reform_mode=ReformMode.NONE,
        backend=args.backend,
        mock_script_path=getattr(args, "mock_script", None),
        mock_embedding_dim=getattr(args, "embedding_dim", 64),
        cache_dir=args.cache_dir,
        chat_model=args.chat_model,
        embed_model=args.embed_model,
    )


def _add_gateway_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--backend", choices=("openai", "mock"), default="openai",
                        help="model backend; openai reads HELPQA_API_BASE / HELPQA_API_KEY")
    parser.add_argument("--mock-script", dest="mock_script", default=None,
                        help="JSON file of [pattern, response] pairs for the mock backend")
    parser.add_argument("--embedding-dim", dest="embedding_dim", type=int, default=64,
                        help="mock embedding dimension")
    parser.add_argument("--cache-dir", default=None, help="response cache directory")
    parser.add_argument("--chat-model", default="chat-default")
    parser.add_argument("--embed-model", default="embed-default")


def _cmd_ingest(args: argparse.Namespace) -> int:
    corpus = load_corpus(args.pages)
    Path(args.out).write_bytes(corpus_to_jsonl(corpus))
    s = corpus.stats
    print(
        f"{s.n_pages} pages, {s.n_sections} sections "
        f"({s.avg_sections_per_page:.2f} sections/page, {s.avg_section_words:.1f} words/section) "
        f"-> {args.out}"
    )
    return EXIT_OK


def _cmd_kb_build(args: argparse.Namespace) -> int:
    corpus = jsonl_to_corpus(Path(args.corpus).read_bytes())
    gateway = build_gateway(_gateway_config(args))
    triples, index = build_kb(corpus, gateway, chat_model=args.chat_model, embed_model=args.embed_model)
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    (out_dir / "triples.jsonl").write_bytes(triples_to_jsonl(triples))
    save_index(index, out_dir / "triple_index.json")
    print(f"{len(triples)} triples, {len(index)} index entries -> {out_dir}")
    return EXIT_OK


def _cmd_kb_query(args: argparse.Namespace) -> int:
    index = load_index(args.index)
    gateway = build_gateway(_gateway_config(args))
    for st in retrieve_triples(args.query, index, gateway, m=args.m, model_id=args.embed_model):
        print(f"{st.score:+.4f}  {st.triple.render()}")
    return EXIT_OK


def _cmd_index_build(args: argparse.Namespace) -> int:
    corpus = jsonl_to_corpus(Path(args.corpus).read_bytes())
    if args.retriever == "bm25":
        save_bm25(bm25_build(corpus), args.out)
    else:
        gateway = build_gateway(_gateway_config(args))
        save_dense(dense_build(corpus, gateway, model_id=args.embed_model), args.out)
    print(f"{args.retriever} index over {len(corpus.sections)} sections -> {args.out}")
    return EXIT_OK


def _cmd_index_search(args: argparse.Namespace) -> int:
    if args.retriever == "bm25":
        contexts = bm25_search(load_bm25(args.index), args.query, k=args.k)
    else:
        gateway = build_gateway(_gateway_config(args))
        contexts = dense_search(load_dense(args.index), args.query, gateway, k=args.k,
                                model_id=args.embed_model)
    for c in contexts:
        print(f"#{c.rank}  {c.score:+.4f}  {c.section.page_url} [{c.section.section_index}] {c.section.heading}")
    return EXIT_OK


def _cmd_run(args: argparse.Namespace) -> int:
    config = ExperimentConfig.from_file(args.config)
    result = harness.run_experiment(config, args.out)
    print(harness.render_table([(config, result.report, None)]), end="")
    if result.n_degraded:
        print(f"{result.n_degraded} degraded queries", file=sys.stderr)
        return EXIT_PARTIAL_RUN
    return EXIT_OK


def _cmd_matrix(args: argparse.Namespace) -> int:
    raw = json.loads(Path(args.configs).read_text(encoding="utf-8"))
    if not isinstance(raw, list):
        raise ConfigError("matrix config file must hold a JSON array of config objects")
    configs = [ExperimentConfig.from_dict(item) for item in raw]
    result = harness.run_matrix(configs, args.out)
    print(result.table_text, end="")
    if any(error is not None for _, _, error in result.rows):
        return EXIT_PARTIAL_RUN
    return EXIT_OK


def _cmd_sweep(args: argparse.Namespace) -> int:
    config = ExperimentConfig.from_file(args.config)
    positions = [int(p) for p in args.positions.split(",") if p.strip()]
    result = positional_sweep(config, positions, args.out)
    print("position,mean_geval,mean_semsim")
    for p, g, s in result.rows:
        print(f"{p},{g},{s}")
    if result.n_skipped:
        print(f"{result.n_skipped} queries skipped (no gold section)", file=sys.stderr)
    return EXIT_OK


def _cmd_validate(args: argparse.Namespace) -> int:
    corpus = None
    if args.corpus:
        corpus = jsonl_to_corpus(Path(args.corpus).read_bytes())
    diagnostics = qa_validate(args.qa, corpus=corpus)
    for d in diagnostics:
        place = f"line {d.line}" if d.line is not None else "-"
        print(f"{d.kind}\t{place}\t{d.message}")
    if not diagnostics:
        n = len(qa_load(args.qa))
        print(f"OK: {n} usable QA pairs")
    return EXIT_OK if not diagnostics else EXIT_PARTIAL_RUN


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="helpqa", description=__doc__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("ingest", help="parse help pages into a sections JSONL corpus")
    p.add_argument("--pages", required=True, help="directory (or .zip) of .html files + manifest.json")
    p.add_argument("--out", required=True, help="output sections.jsonl path")
    p.set_defaults(func=_cmd_ingest)

    kb = sub.add_parser("kb", help="knowledge-base commands")
    kb_sub = kb.add_subparsers(dest="kb_command", required=True)
    p = kb_sub.add_parser("build", help="generate and index triples for a corpus")
    p.add_argument("--corpus", required=True, help="sections.jsonl path")
    p.add_argument("--out-dir", required=True)
    _add_gateway_flags(p)
    p.set_defaults(func=_cmd_kb_build)
    p = kb_sub.add_parser("query", help="retrieve the top-m triples for a query")
    p.add_argument("--index", required=True, help="triple_index.json path")
    p.add_argument("--query", required=True)
    p.add_argument("--m", type=int, default=20)
    _add_gateway_flags(p)
    p.set_defaults(func=_cmd_kb_query)

    idx = sub.add_parser("index", help="retriever index commands")
    idx_sub = idx.add_subparsers(dest="index_command", required=True)
    p = idx_sub.add_parser("build", help="build a retriever index from a corpus")
    p.add_argument("--corpus", required=True, help="sections.jsonl path")
    p.add_argument("--retriever", choices=("bm25", "dense"), required=True)
    p.add_argument("--out", required=True)
    _add_gateway_flags(p)
    p.set_defaults(func=_cmd_index_build)
    p = idx_sub.add_parser("search", help="search a retriever index")
    p.add_argument("--index", required=True)
    p.add_argument("--retriever", choices=("bm25", "dense"), required=True)
    p.add_argument("--query", required=True)
    p.add_argument("--k", type=int, default=3)
    _add_gateway_flags(p)
    p.set_defaults(func=_cmd_index_search)

    p = sub.add_parser("run", help="run one experiment config")
    p.add_argument("--config", required=True, help="experiment config JSON file")
    p.add_argument("--out", default="runs", help="output root directory")
    p.set_defaults(func=_cmd_run)

    p = sub.add_parser("matrix", help="run a list of configs and render the comparison table")
    p.add_argument("--configs", required=True, help="JSON array of config objects")
    p.add_argument("--out", default="runs")
    p.set_defaults(func=_cmd_matrix)

    p = sub.add_parser("sweep", help="gold-position sensitivity sweep")
    p.add_argument("--config", required=True)
    p.add_argument("--positions", required=True, help="comma-separated 1-based positions, e.g. 1,2,3")
    p.add_argument("--out", default="runs")
    p.set_defaults(func=_cmd_sweep)

    p = sub.add_parser("validate", help="validate a QA benchmark file")
    p.add_argument("--qa", required=True, help="QA JSONL path")
    p.add_argument("--corpus", default=None, help="sections.jsonl to cross-check gold URLs")
    p.set_defaults(func=_cmd_validate)

    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.INFO,
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        return args.func(args)
    except ConfigError as e:
        print(f"config error: {e}", file=sys.stderr)
        return EXIT_CONFIG_ERROR
    except HelpQAError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_CONFIG_ERROR


if __name__ == "__main__":
    raise SystemExit(main())
