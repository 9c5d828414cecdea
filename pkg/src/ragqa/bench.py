"""Configuration sweeps over the QA pipeline and their result tables.

A sweep config is one JSON document::

    {
      "corpus": {"path": "fixture" | "<file>", "format": "generic-json"},
      "embedder": {"kind": "deterministic-hash", "dim": 384},
      "generator": {"kind": "extractive-oracle"},
      "grid": {
        "chunk_size": [100], "overlap": [0.0], "metric": ["cosine", "pairwise"],
        "top_n": [1, 2], "retrieval_unit": ["chunk"], "back_retrieval": [false],
        "template_id": ["concise-v1"]
      },
      "output_dir": "runs/example", "question_limit": null, "workers": 4,
      "max_context_chars": 4000, "chunk_unit": "chars", "cache_dir": null, "seed": 0
    }

Relative paths resolve against the config file's directory. Each sweep
writes ``results.csv`` (no timing, byte-stable across offline re-runs),
``results.md`` (tables with wall time), ``skipped.jsonl`` and one
``cells/<cell>.jsonl`` log per executed cell.
"""

from __future__ import annotations

import csv
import io
import itertools
import json
import logging
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field, fields, replace
from decimal import ROUND_HALF_UP, Decimal
from pathlib import Path

from .corpus import Corpus, fixture_path, load_corpus
from .embedding import EmbedderSpec, EmbeddingCache
from .errors import ConfigError, RagQAError, UnknownQid
from .evaluation import aggregate, score
from .generators import GeneratorSpec
from .pipeline import DEFAULT_MAX_CONTEXT, PipelineConfig, QAPipeline
from .segmenter import ChunkingSpec

logger = logging.getLogger(__name__)

GRID_KEYS = ("chunk_size", "overlap", "metric", "top_n", "retrieval_unit", "back_retrieval", "template_id")
DEFAULT_GRID = {
    "chunk_size": [100],
    "overlap": [0.0],
    "metric": ["cosine"],
    "top_n": [2],
    "retrieval_unit": ["chunk"],
    "back_retrieval": [False],
    "template_id": ["concise-v1"],
}


@dataclass
class SweepConfig:
    corpus_path: str = "fixture"
    corpus_format: str = "generic-json"
    embedder: EmbedderSpec = field(default_factory=EmbedderSpec)
    generator: GeneratorSpec = field(default_factory=GeneratorSpec)
    grid: dict = field(default_factory=lambda: {k: list(v) for k, v in DEFAULT_GRID.items()})
    output_dir: str = "runs/sweep"
    question_limit: int | None = None
    workers: int = 4
    max_context_chars: int = DEFAULT_MAX_CONTEXT
    chunk_unit: str = "chars"
    cache_dir: str | None = None
    seed: int = 0

    @classmethod
    def from_dict(cls, data: dict, base_dir: Path | None = None) -> "SweepConfig":
        if not isinstance(data, dict):
            raise ConfigError("sweep config must be a JSON object")
        base_dir = base_dir or Path.cwd()
        corpus = data.get("corpus", {})
        if isinstance(corpus, str):
            corpus = {"path": corpus}
        grid = {k: list(v) for k, v in DEFAULT_GRID.items()}
        for key, values in data.get("grid", {}).items():
            if key not in GRID_KEYS:
                raise ConfigError(f"unknown grid key {key!r}; expected one of {GRID_KEYS}")
            grid[key] = list(values) if isinstance(values, list) else [values]

        def resolve(p):
            if p is None or p == "fixture":
                return p
            path = Path(p)
            return str(path if path.is_absolute() else base_dir / path)

        try:
            return cls(
                corpus_path=resolve(corpus.get("path", "fixture")),
                corpus_format=corpus.get("format", "generic-json"),
                embedder=EmbedderSpec(**data.get("embedder", {})),
                generator=GeneratorSpec(**data.get("generator", {})),
                grid=grid,
                output_dir=resolve(data.get("output_dir", "runs/sweep")),
                question_limit=data.get("question_limit"),
                workers=int(data.get("workers", 4)),
                max_context_chars=int(data.get("max_context_chars", DEFAULT_MAX_CONTEXT)),
                chunk_unit=data.get("chunk_unit", "chars"),
                cache_dir=resolve(data.get("cache_dir")),
                seed=int(data.get("seed", 0)),
            )
        except TypeError as exc:
            raise ConfigError(f"bad sweep config: {exc}") from exc

    @classmethod
    def from_file(cls, path) -> "SweepConfig":
        path = Path(path)
        try:
            data = json.loads(path.read_text(encoding="utf-8"))
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: line {exc.lineno}: {exc.msg}") from exc
        return cls.from_dict(data, base_dir=path.parent)

    def load_corpus(self) -> Corpus:
        if self.corpus_path == "fixture":
            return load_corpus(fixture_path(), "generic-json")
        return load_corpus(self.corpus_path, self.corpus_format)

    def cells(self) -> list[dict]:
        product = itertools.product(*(self.grid[k] for k in GRID_KEYS))
        return [dict(zip(GRID_KEYS, values)) for values in product]

    def pipeline_config(self, cell: dict) -> PipelineConfig:
        """PipelineConfig for one grid cell; raises ConfigError if invalid."""
        chunking = ChunkingSpec("fixed", cell["chunk_size"], float(cell["overlap"]), self.chunk_unit)
        return PipelineConfig(
            chunking=chunking,
            retrieval_unit=cell["retrieval_unit"],
            metric=cell["metric"],
            top_n=cell["top_n"],
            back_retrieval=bool(cell["back_retrieval"]),
            prompt_template_id=cell["template_id"],
            generator=self.generator,
            max_context_chars=self.max_context_chars,
        )


@dataclass
class SweepResultRow:
    chunk: int
    overlap: float
    metric: str
    top_n: int
    unit: str
    template: str
    em: float | None
    precision: float | None
    recall: float | None
    f1: float | None
    wall_time_s: float
    n_questions: int
    status: str = "ok"
    message: str = ""

    def sort_key(self):
        return (self.chunk, self.overlap, self.metric, self.top_n, self.unit, self.template)

    @property
    def is_sentence_baseline(self) -> bool:
        return self.unit == "sentence"


ROW_FIELDS = tuple(f.name for f in fields(SweepResultRow))
CSV_FIELDS = tuple(f for f in ROW_FIELDS if f != "wall_time_s")


@dataclass
class SweepOutcome:
    rows: list[SweepResultRow]
    skipped: list[dict]
    files: dict = field(default_factory=dict)
    error_codes: list[int] = field(default_factory=list)


def _unit_label(config: PipelineConfig) -> str:
    return config.retrieval_unit + ("+back" if config.back_retrieval else "")


def cell_name(config: PipelineConfig) -> str:
    return (f"c{config.chunking.chunk_size}_o{config.chunking.overlap:g}_{config.metric}"
            f"_n{config.top_n}_{_unit_label(config)}_{config.prompt_template_id}")


def _select_examples(corpus: Corpus, limit: int | None):
    examples = list(corpus.examples)
    return examples if limit is None else examples[:limit]


def run_cell(pipeline: QAPipeline, config: PipelineConfig, examples, workers: int = 1):
    """Answer and score ``examples`` under one config. Returns (aggregate,
    per-question log records)."""
    def one(example):
        result = pipeline.answer_question(example, config)
        report = score(example.qid, result.predicted_answer, example.reference_answers)
        rec = result.to_record()
        rec["metrics"] = asdict(report)
        return report, rec

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            outputs = list(pool.map(one, examples))
    else:
        outputs = [one(ex) for ex in examples]
    reports = [r for r, _ in outputs]
    return aggregate(reports, config.fingerprint()), [rec for _, rec in outputs]


def run_sweep(config: SweepConfig, output_dir=None, pipeline: QAPipeline | None = None) -> SweepOutcome:
    """Run every valid grid cell; invalid cells are skipped and logged, and a
    failing cell becomes a ``status="error"`` row without stopping the
    sweep."""
    out = Path(output_dir or config.output_dir)
    (out / "cells").mkdir(parents=True, exist_ok=True)
    corpus = config.load_corpus()
    examples = _select_examples(corpus, config.question_limit)
    if pipeline is None:
        cache = EmbeddingCache(config.cache_dir) if config.cache_dir else None
        pipeline = QAPipeline(corpus, config.embedder, cache=cache)

    rows, skipped, codes = [], [], []
    for cell in config.cells():
        try:
            pconf = config.pipeline_config(cell)
        except ConfigError as exc:
            logger.warning("skipping grid cell %s: %s", cell, exc)
            skipped.append({"cell": cell, "reason": str(exc)})
            continue
        t0 = time.perf_counter()
        row = SweepResultRow(
            chunk=pconf.chunking.chunk_size, overlap=pconf.chunking.overlap, metric=pconf.metric,
            top_n=pconf.top_n, unit=_unit_label(pconf), template=pconf.prompt_template_id,
            em=None, precision=None, recall=None, f1=None, wall_time_s=0.0,
            n_questions=len(examples),
        )
        log_path = out / "cells" / f"{cell_name(pconf)}.jsonl"
        try:
            agg, records = run_cell(pipeline, pconf, examples, config.workers)
            row = replace(row, em=agg.em, precision=agg.precision, recall=agg.recall, f1=agg.f1,
                          n_questions=agg.n_questions)
            log_path.write_text("".join(json.dumps(r, sort_keys=True) + "\n" for r in records),
                                encoding="utf-8")
        except Exception as exc:  # a failing cell must not abort the sweep
            logger.error("grid cell %s failed: %s", cell_name(pconf), exc)
            row = replace(row, status="error", message=f"{type(exc).__name__}: {exc}")
            codes.append(getattr(exc, "exit_code", 1) if isinstance(exc, RagQAError) else 1)
            log_path.write_text(json.dumps({"error": row.message}) + "\n", encoding="utf-8")
        rows.append(replace(row, wall_time_s=time.perf_counter() - t0))

    rows.sort(key=SweepResultRow.sort_key)
    (out / "skipped.jsonl").write_text("".join(json.dumps(s, sort_keys=True) + "\n" for s in skipped),
                                       encoding="utf-8")
    files = emit_tables(rows, out) if rows else {}
    return SweepOutcome(rows, skipped, files, codes)


def format_metric(value: float | None, decimals: int) -> str:
    """Round half away from zero: 0.405 -> "0.41" at two decimals."""
    if value is None:
        return "-"
    quantum = Decimal(1).scaleb(-decimals)
    return str(Decimal(repr(float(value))).quantize(quantum, rounding=ROUND_HALF_UP))


def _csv_value(value) -> str:
    if value is None:
        return ""
    if isinstance(value, float):
        return repr(value)
    return str(value)


def rows_to_csv(rows) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(CSV_FIELDS)
    for row in rows:
        writer.writerow([_csv_value(getattr(row, f)) for f in CSV_FIELDS])
    return buf.getvalue()


def _markdown_table(rows, decimals: int) -> str:
    header = ["Chunk", "Overlap", "Dist", "TopN", "Unit", "Template", "EM", "Precision",
              "Recall", "F1", "Time (s)", "N", "Status"]
    lines = []
    for r in rows:
        metrics = [format_metric(getattr(r, m), decimals) for m in ("em", "precision", "recall", "f1")]
        lines.append([str(r.chunk), f"{r.overlap:.1f}", r.metric, str(r.top_n), r.unit, r.template,
                      *metrics, f"{r.wall_time_s:.2f}", str(r.n_questions), r.status])
    widths = [max(len(h), *(len(line[i]) for line in lines)) for i, h in enumerate(header)]

    def fmt(cells):
        return "| " + " | ".join(c.rjust(w) for c, w in zip(cells, widths)) + " |"

    out = [fmt(header), "|" + "|".join("-" * (w + 2) for w in widths) + "|"]
    out.extend(fmt(line) for line in lines)
    return "\n".join(out)


def rows_to_markdown(rows) -> str:
    chunk_rows = [r for r in rows if not r.is_sentence_baseline]
    sentence_rows = [r for r in rows if r.is_sentence_baseline]
    parts = []
    if chunk_rows:
        parts += ["## Results with chunks for context", "", _markdown_table(chunk_rows, 2), ""]
    if sentence_rows:
        parts += ["## Results with sentences for context", "", _markdown_table(sentence_rows, 3), ""]
    parts.append("Wall times are measured on this machine and are not comparable across hosts.")
    return "\n".join(parts) + "\n"


def emit_tables(rows, output_dir) -> dict:
    out = Path(output_dir)
    out.mkdir(parents=True, exist_ok=True)
    csv_path, md_path = out / "results.csv", out / "results.md"
    csv_path.write_text(rows_to_csv(rows), encoding="utf-8")
    md_path.write_text(rows_to_markdown(rows), encoding="utf-8")
    return {"csv": csv_path, "markdown": md_path}


def run_single(qid: str, config: PipelineConfig, corpus: Corpus, pipeline: QAPipeline | None = None) -> str:
    """Human-readable trace of one question through both stages."""
    try:
        example = corpus.example(qid)
    except KeyError:
        raise UnknownQid(f"unknown qid {qid!r}") from None
    pipeline = pipeline or QAPipeline(corpus)
    result = pipeline.answer_question(example, config)
    report = score(qid, result.predicted_answer, example.reference_answers)

    lines = ["== Question ==", f"[{qid}] {example.question}",
             f"references: {list(example.reference_answers)}", "",
             f"== Retrieved hits ({config.metric}, top {config.top_n}) =="]
    if not result.retrieved:
        lines.append("(none)")
    for h in result.retrieved:
        lines.append(f"#{h.rank} item={h.item_id} score={h.score:.6f} "
                     f"span=[{h.chunk.char_start},{h.chunk.char_end}) {h.chunk.text!r}")
    lines += ["", "== Back-retrieved chunks =="]
    if config.back_retrieval:
        lines += [f"chunk {c.index} span=[{c.char_start},{c.char_end})" for c in result.context_chunks] or ["(none)"]
    else:
        lines.append("(back-retrieval disabled)")
    lines += ["", "== Context ==", result.context or "(empty)", "",
              "== Prompt ==", result.prompt, "",
              "== Answer ==", f"raw: {result.raw_answer!r}", f"predicted: {result.predicted_answer!r}", "",
              "== Metrics ==",
              f"EM={report.em} P={report.precision:.4f} R={report.recall:.4f} F1={report.f1:.4f} "
              f"(reference #{report.matched_reference})"]
    return "\n".join(lines) + "\n"
