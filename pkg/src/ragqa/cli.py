"""``ragqa`` command line.

Verbs: ``sweep``, ``ask``, ``eval``, ``dump-chunks``. Settings resolve in
this order, later winning: built-in defaults, the JSON config file,
environment variables, command-line flags.

Environment variables:
    RAGQA_EMBED_ENDPOINT, RAGQA_EMBED_MODEL  switch the embedder to http-service
    RAGQA_CHAT_ENDPOINT, RAGQA_CHAT_MODEL    switch the generator to http-chat
    RAGQA_API_KEY                            bearer token sent to both services

Exit codes: 0 success, 1 config error, 2 data error, 3 service error.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from dataclasses import asdict, replace
from pathlib import Path

from .bench import SweepConfig, run_single, run_sweep
from .corpus import FORMATS, fixture_path, load_corpus
from .errors import ConfigError, DataError, FileMissing, RagQAError
from .evaluation import evaluate_predictions, read_predictions
from .segmenter import ChunkingSpec, chunk_document

logger = logging.getLogger("ragqa")


def _apply_env(config: SweepConfig) -> SweepConfig:
    env = os.environ
    if env.get("RAGQA_EMBED_ENDPOINT"):
        config.embedder = replace(config.embedder, kind="http-service",
                                  endpoint=env["RAGQA_EMBED_ENDPOINT"],
                                  model_name=env.get("RAGQA_EMBED_MODEL", config.embedder.model_name))
    if env.get("RAGQA_CHAT_ENDPOINT"):
        config.generator = replace(config.generator, kind="http-chat",
                                   endpoint=env["RAGQA_CHAT_ENDPOINT"],
                                   model_name=env.get("RAGQA_CHAT_MODEL", config.generator.model_name))
    return config


def _load_config(path) -> SweepConfig:
    config = SweepConfig.from_file(path) if path else SweepConfig()
    return _apply_env(config)


def _corpus_arg(value: str | None):
    return fixture_path() if value in (None, "fixture") else Path(value)


def cmd_sweep(args) -> int:
    config = _load_config(args.config)
    if args.limit is not None:
        config.question_limit = args.limit
    if args.out:
        config.output_dir = args.out
    if args.workers is not None:
        config.workers = args.workers
    outcome = run_sweep(config)
    n_err = sum(r.status != "ok" for r in outcome.rows)
    print(f"{len(outcome.rows)} cell(s) run, {len(outcome.skipped)} skipped, {n_err} failed")
    for name, path in outcome.files.items():
        print(f"{name}: {path}")
    return max(outcome.error_codes, default=0)


def cmd_ask(args) -> int:
    config = _load_config(args.config)
    cell = {k: v[0] for k, v in config.grid.items()}
    overrides = {"chunk_size": args.chunk_size, "overlap": args.overlap, "metric": args.metric,
                 "top_n": args.top_n, "retrieval_unit": args.unit, "template_id": args.template,
                 "back_retrieval": args.back_retrieval}
    cell.update({k: v for k, v in overrides.items() if v is not None})
    pconf = config.pipeline_config(cell)
    sys.stdout.write(run_single(args.qid, pconf, config.load_corpus()))
    return 0


def cmd_eval(args) -> int:
    corpus = load_corpus(_corpus_arg(args.corpus), args.format)
    if not Path(args.predictions).exists():
        raise FileMissing(f"predictions file not found: {args.predictions}")
    reports, agg = evaluate_predictions(read_predictions(args.predictions), corpus,
                                        drop_articles=args.drop_articles)
    if args.per_question:
        for r in reports:
            print(json.dumps(asdict(r)))
    print(json.dumps({k: v for k, v in agg.as_dict().items() if k != "config"}))
    return 0


def cmd_dump_chunks(args) -> int:
    corpus = load_corpus(_corpus_arg(args.corpus), args.format)
    if args.doc not in corpus.documents:
        raise DataError(f"unknown document {args.doc!r}")
    spec_fields = json.loads(args.spec) if args.spec else {}
    for key in ("strategy", "chunk_size", "overlap", "unit"):
        value = getattr(args, key)
        if value is not None:
            spec_fields[key] = value
    try:
        spec = ChunkingSpec(**spec_fields)
    except TypeError as exc:
        raise ConfigError(f"bad chunking spec: {exc}") from exc
    for chunk in chunk_document(corpus.documents[args.doc], spec):
        print(json.dumps({"index": chunk.index, "char_start": chunk.char_start,
                          "char_end": chunk.char_end, "kind": chunk.kind, "text": chunk.text},
                         ensure_ascii=False))
    return 0


def _bool(value: str) -> bool:
    if value.lower() in ("1", "true", "yes"):
        return True
    if value.lower() in ("0", "false", "no"):
        return False
    raise argparse.ArgumentTypeError(f"expected true/false, got {value!r}")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="ragqa", description="Two-stage retrieval QA benchmark harness.")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("sweep", help="run a configuration grid and write result tables")
    p.add_argument("--config", help="sweep config JSON (defaults: fixture corpus, offline stack)")
    p.add_argument("--limit", type=int, help="evaluate only the first N questions")
    p.add_argument("--out", help="output directory")
    p.add_argument("--workers", type=int)
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("ask", help="trace one question through the pipeline")
    p.add_argument("--qid", required=True)
    p.add_argument("--config")
    p.add_argument("--chunk-size", type=int)
    p.add_argument("--overlap", type=float)
    p.add_argument("--metric", choices=["cosine", "pairwise"])
    p.add_argument("--top-n", type=int)
    p.add_argument("--unit", choices=["sentence", "chunk"])
    p.add_argument("--template")
    p.add_argument("--back-retrieval", type=_bool)
    p.set_defaults(func=cmd_ask)

    p = sub.add_parser("eval", help="score a JSON-lines predictions file")
    p.add_argument("--predictions", required=True)
    p.add_argument("--corpus", default="fixture")
    p.add_argument("--format", choices=FORMATS, default="generic-json")
    p.add_argument("--drop-articles", action="store_true", help="also remove a/an/the before scoring")
    p.add_argument("--per-question", action="store_true")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("dump-chunks", help="print the chunks of one document as JSON lines")
    p.add_argument("--doc", required=True)
    p.add_argument("--corpus", default="fixture")
    p.add_argument("--format", choices=FORMATS, default="generic-json")
    p.add_argument("--spec", help='chunking spec JSON, e.g. \'{"strategy": "fixed", "chunk_size": 100}\'')
    p.add_argument("--strategy", choices=["sentence", "fixed"])
    p.add_argument("--chunk-size", dest="chunk_size", type=int)
    p.add_argument("--overlap", type=float)
    p.add_argument("--unit", choices=["chars", "words"])
    p.set_defaults(func=cmd_dump_chunks)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except json.JSONDecodeError as exc:
        print(f"error: invalid JSON argument: {exc}", file=sys.stderr)
        return 1
    except RagQAError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code


if __name__ == "__main__":
    sys.exit(main())
