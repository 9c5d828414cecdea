r"""
Two-stage retrieval on one document
===================================

Sentences are retrieved first, then widened to the fixed chunks that
contain them, and the widened context is rendered into the concise prompt.
"""

import numpy as np

from ragqa import ChunkingSpec, HashEmbedder, build_prompt, build_store, load_fixture
from ragqa.pipeline import back_retrieve_context, build_context
from ragqa.segmenter import split_fixed, split_sentences

corpus = load_fixture()
example = corpus.example("gr-2")
doc = corpus.documents[example.doc_id]
embedder = HashEmbedder(384)

###############################################################################
# Stage 1: rank the sentences of the question's own document.
sentences = split_sentences(doc)
store = build_store(list(zip(sentences, embedder.embed([s.text for s in sentences]))))
query = embedder.embed_one(example.question)
hits = store.top_n(query, 2, "cosine")
for h in hits:
    print(f"#{h.rank} {h.score:.3f} {h.chunk.text}")

###############################################################################
# Widen each sentence hit to the 100-char chunks it touches (10% overlap).
fixed = split_fixed(doc, ChunkingSpec("fixed", 100, 0.1))
chunks = back_retrieve_context(hits, fixed)
print([c.span for c in chunks])
context = build_context(chunks)

###############################################################################
# Stage 2: the prompt the generator would see.
print(build_prompt(example.question, context, "concise-v1"))

###############################################################################
# Cosine ignores vector length, Euclidean distance does not.
witness = build_store([(None, np.array([3.0, 0.0])), (None, np.array([0.6, 0.8]))])
print("cosine top-1:", witness.top_n([1.0, 0.0], 1, "cosine")[0].item_id)
print("pairwise top-1:", witness.top_n([1.0, 0.0], 1, "pairwise")[0].item_id)
