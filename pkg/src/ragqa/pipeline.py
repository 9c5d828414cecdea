"""Two-stage question answering.

Stage 1 retrieves units (sentences or fixed chunks) of the question's own
document and, optionally, widens sentence hits to the fixed chunks that
contain them. Stage 2 renders an instruction prompt over that context and
asks a generator for the answer.
"""

from __future__ import annotations

import threading
import time
from dataclasses import dataclass, field
from typing import Mapping, Sequence

from .corpus import Corpus, Document, QAExample
from .embedding import EmbedderSpec, EmbeddingCache, cached_embed, make_embedder
from .errors import InvalidInput, InvalidSpec, StageError
from .generators import GeneratorSpec, make_generator, postprocess_answer
from .prompts import build_prompt, get_template
from .segmenter import Chunk, ChunkingSpec, chunk_document, chunks_overlapping_span, split_sentences
from .vectorstore import METRICS, RetrievalHit, VectorStore, build_store

DEFAULT_MAX_CONTEXT = 4000
UNITS = ("sentence", "chunk")


@dataclass(frozen=True)
class PipelineConfig:
    chunking: ChunkingSpec = field(default_factory=ChunkingSpec)
    retrieval_unit: str = "chunk"
    metric: str = "cosine"
    top_n: int = 2
    back_retrieval: bool = False
    prompt_template_id: str = "concise-v1"
    generator: GeneratorSpec = field(default_factory=GeneratorSpec)
    max_context_chars: int = DEFAULT_MAX_CONTEXT

    def __post_init__(self):
        if self.retrieval_unit not in UNITS:
            raise InvalidSpec(f"retrieval_unit must be one of {UNITS}")
        if self.metric not in METRICS:
            raise InvalidSpec(f"metric must be one of {METRICS}")
        if isinstance(self.top_n, bool) or not isinstance(self.top_n, int) or self.top_n < 0:
            raise InvalidSpec("top_n must be a non-negative integer")
        if self.max_context_chars < 1:
            raise InvalidSpec("max_context_chars must be positive")
        if self.back_retrieval and (self.retrieval_unit != "sentence" or self.chunking.strategy != "fixed"):
            raise InvalidSpec("back_retrieval needs retrieval_unit='sentence' and fixed chunking")
        get_template(self.prompt_template_id)

    def fingerprint(self) -> dict:
        return {
            "chunk": self.chunking.chunk_size if self.chunking.strategy == "fixed" else None,
            "overlap": self.chunking.overlap if self.chunking.strategy == "fixed" else None,
            "unit": self.retrieval_unit + ("+back" if self.back_retrieval else ""),
            "metric": self.metric,
            "top_n": self.top_n,
            "template": self.prompt_template_id,
            "generator": self.generator.fingerprint(),
        }


@dataclass
class QAResult:
    qid: str
    retrieved: list[RetrievalHit]
    context_chunks: list[Chunk]
    context: str
    prompt: str
    raw_answer: str
    predicted_answer: str
    timing: dict = field(default_factory=dict)

    def to_record(self, include_timing: bool = False) -> dict:
        rec = {
            "qid": self.qid,
            "retrieved": [
                {"rank": h.rank, "item_id": h.item_id, "score": h.score,
                 "span": list(h.chunk.span) if h.chunk else None}
                for h in self.retrieved
            ],
            "context_spans": [list(c.span) for c in self.context_chunks],
            "context": self.context,
            "prompt": self.prompt,
            "raw_answer": self.raw_answer,
            "predicted_answer": self.predicted_answer,
        }
        if include_timing:
            rec["timing"] = dict(self.timing)
        return rec


def units_for(doc: Document, config: PipelineConfig) -> list[Chunk]:
    if config.retrieval_unit == "sentence":
        return split_sentences(doc)
    return chunk_document(doc, config.chunking)


def retrieve(question_vector, doc_id: str, stores: Mapping[str, VectorStore],
             config: PipelineConfig) -> list[RetrievalHit]:
    """Top-N hits from the store built for ``doc_id`` only."""
    if doc_id not in stores:
        raise InvalidInput(f"no vector store built for document {doc_id!r}")
    if config.top_n == 0:
        return []
    return stores[doc_id].top_n(question_vector, config.top_n, config.metric)


def back_retrieve_context(hits: Sequence[RetrievalHit], fixed_chunks: Sequence[Chunk]) -> list[Chunk]:
    """Fixed chunks intersecting any hit's sentence span, each once, in
    document order."""
    doc_ids = {h.chunk.doc_id for h in hits} | {c.doc_id for c in fixed_chunks}
    if len(doc_ids) > 1:
        raise InvalidInput(f"back-retrieval across documents: {sorted(doc_ids)}")
    selected: dict[tuple[str, int], Chunk] = {}
    for hit in hits:
        for chunk in chunks_overlapping_span(fixed_chunks, hit.chunk.span):
            selected.setdefault((chunk.doc_id, chunk.index), chunk)
    return sorted(selected.values(), key=lambda c: (c.char_start, c.index))


def merge_spans(chunks: Sequence[Chunk]) -> list[tuple[int, int]]:
    """Union of chunk spans; only strictly overlapping spans merge, touching
    ones stay separate."""
    spans: list[list[int]] = []
    for c in sorted(chunks, key=lambda c: (c.char_start, c.char_end)):
        if spans and c.char_start < spans[-1][1]:
            spans[-1][1] = max(spans[-1][1], c.char_end)
        else:
            spans.append([c.char_start, c.char_end])
    return [(s, e) for s, e in spans]


def _truncate(text: str, limit: int) -> str:
    if len(text) <= limit:
        return text
    cut = text[:limit]
    if not text[limit].isspace():
        idx = max(cut.rfind(" "), cut.rfind("\n"), cut.rfind("\t"))
        if idx > 0:
            cut = cut[:idx]
    return cut.rstrip()


def build_context(items: Sequence[Chunk | RetrievalHit], max_context_chars: int = DEFAULT_MAX_CONTEXT) -> str:
    """Join selected chunks in document order with newlines, writing any
    region shared by overlapping chunks once, then cut at a whitespace
    boundary to at most ``max_context_chars``."""
    chunks = [it.chunk if isinstance(it, RetrievalHit) else it for it in items]
    if len({c.doc_id for c in chunks}) > 1:
        raise InvalidInput("build_context needs chunks from a single document")
    pieces: list[str] = []
    end = -1
    for c in sorted(chunks, key=lambda c: (c.char_start, c.char_end)):
        if pieces and c.char_start < end:
            if c.char_end > end:
                pieces[-1] += c.text[end - c.char_start:]
                end = c.char_end
        else:
            pieces.append(c.text)
            end = c.char_end
    return _truncate("\n".join(pieces), max_context_chars)


class DocumentIndex:
    """Per-document retrieval units plus the fixed chunks used for
    back-retrieval."""

    def __init__(self, doc: Document, units: list[Chunk], store: VectorStore, fixed: list[Chunk]):
        self.doc = doc
        self.units = units
        self.store = store
        self.fixed = fixed


class QAPipeline:
    """Holds the corpus, embedder and generator, and caches per-document
    indexes keyed by chunking spec and retrieval unit. Safe to call from
    several threads."""

    def __init__(self, corpus: Corpus, embedder_spec: EmbedderSpec | None = None,
                 cache: EmbeddingCache | None = None, embedder=None, generator=None):
        self.corpus = corpus
        self.embedder_spec = embedder_spec or EmbedderSpec()
        self.embedder = embedder or make_embedder(self.embedder_spec)
        self.cache = cache
        self._generator = generator
        self._generators: dict[GeneratorSpec, object] = {}
        self._stores: dict[tuple, tuple[list[Chunk], VectorStore]] = {}
        self._lock = threading.Lock()

    def _embed(self, texts: list[str]):
        if self.cache is not None:
            return cached_embed(texts, self.embedder_spec, self.cache, embedder=self.embedder)
        return self.embedder.embed(texts)

    def generator_for(self, spec: GeneratorSpec):
        if self._generator is not None:
            return self._generator
        with self._lock:
            if spec not in self._generators:
                self._generators[spec] = make_generator(spec)
            return self._generators[spec]

    def _store(self, doc: Document, config: PipelineConfig) -> tuple[list[Chunk], VectorStore]:
        if config.retrieval_unit == "sentence":
            key = (doc.doc_id, "sentence")
        else:
            key = (doc.doc_id, "chunk", config.chunking)
        with self._lock:
            cached = self._stores.get(key)
        if cached is not None:
            return cached
        units = units_for(doc, config)
        vectors = self._embed([u.text for u in units]) if units else []
        built = (units, build_store(list(zip(units, vectors)), dim=self.embedder_spec.dim))
        with self._lock:
            return self._stores.setdefault(key, built)

    def index(self, doc_id: str, config: PipelineConfig) -> DocumentIndex:
        if doc_id not in self.corpus.documents:
            raise InvalidInput(f"no vector store for unknown document {doc_id!r}")
        doc = self.corpus.documents[doc_id]
        units, store = self._store(doc, config)
        fixed = chunk_document(doc, config.chunking) if config.chunking.strategy == "fixed" else []
        return DocumentIndex(doc, units, store, fixed)

    def stores(self, config: PipelineConfig, doc_ids: Sequence[str]) -> dict[str, VectorStore]:
        return {d: self.index(d, config).store for d in doc_ids}

    def answer_question(self, example: QAExample, config: PipelineConfig) -> QAResult:
        timing: dict[str, float] = {}

        def stage(name, fn, *args):
            t0 = time.perf_counter()
            try:
                return fn(*args)
            except StageError:
                raise
            except Exception as exc:
                raise StageError(name, exc) from exc
            finally:
                timing[name] = time.perf_counter() - t0

        idx = stage("index", self.index, example.doc_id, config)
        stores = {example.doc_id: idx.store}

        def _retrieve():
            if config.top_n == 0 or idx.store.count == 0:
                return []
            qvec = self._embed([example.question])[0]
            return retrieve(qvec, example.doc_id, stores, config)

        hits = stage("retrieve", _retrieve)
        if config.back_retrieval:
            context_chunks = stage("back_retrieve", back_retrieve_context, hits, idx.fixed)
        else:
            context_chunks = sorted((h.chunk for h in hits), key=lambda c: (c.char_start, c.index))
        context = stage("build_context", build_context, context_chunks, config.max_context_chars)
        prompt = stage("build_prompt", build_prompt, example.question, context, config.prompt_template_id)
        generator = self.generator_for(config.generator)
        raw = stage("generate", generator.generate, prompt, example.question, context,
                    example.reference_answers)
        return QAResult(
            qid=example.qid,
            retrieved=hits,
            context_chunks=list(context_chunks),
            context=context,
            prompt=prompt,
            raw_answer=raw,
            predicted_answer=postprocess_answer(raw),
            timing=timing,
        )


def answer_question(example: QAExample, corpus: Corpus, config: PipelineConfig,
                    pipeline: QAPipeline | None = None) -> QAResult:
    pipeline = pipeline or QAPipeline(corpus)
    return pipeline.answer_question(example, config)
