"""Retrieval-augmented question answering with chunked vector retrieval,
instruction prompts and stemmed EM/F1 evaluation."""

from .corpus import Corpus, Document, QAExample, clean_text, load_corpus, load_fixture
from .embedding import EmbedderSpec, EmbeddingCache, HashEmbedder, cached_embed, embed
from .evaluation import (AggregateReport, MetricReport, aggregate, exact_match, normalize_tokens,
                         precision_recall_f1)
from .generators import ExtractiveOracle, GeneratorSpec, generate
from .pipeline import (PipelineConfig, QAPipeline, QAResult, answer_question, back_retrieve_context,
                       build_context, retrieve)
from .prompts import build_prompt
from .segmenter import Chunk, ChunkingSpec, chunks_overlapping_span, split_fixed, split_sentences
from .vectorstore import RetrievalHit, VectorStore, build_store, cosine_similarity, pairwise_distance, top_n

__version__ = "0.1.0"
