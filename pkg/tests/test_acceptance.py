"""Acceptance criteria, one test each, at their stated sizes, tolerances
and runtime budgets. A summary line per criterion is printed at the end of
the pytest run."""

import csv
import math
import os
import random
import time

import numpy as np
import pytest

from metric_oracle import PAIRS, VERBOSE_PRED, reference_metrics
from ragqa.bench import SweepConfig, run_sweep
from ragqa.corpus import Document
from ragqa.evaluation import precision_recall_f1, score
from ragqa.pipeline import PipelineConfig, QAPipeline, back_retrieve_context
from ragqa.porter import stem
from ragqa.segmenter import ChunkingSpec, split_fixed, split_sentences
from ragqa.vectorstore import RetrievalHit, VectorStore


class Budget:
    def __init__(self, seconds):
        self.seconds = seconds
        self.start = time.perf_counter()

    @property
    def elapsed(self):
        return time.perf_counter() - self.start

    def check(self):
        assert self.elapsed < self.seconds, f"took {self.elapsed:.2f}s, budget {self.seconds}s"


def note(request, text):
    request.node.user_properties.append(("detail", text))


@pytest.mark.acceptance(1, "optional chat-service smoke sweep")
def test_criterion_1_chat_smoke(request, tmp_path):
    if not os.environ.get("RAGQA_CHAT_ENDPOINT"):
        pytest.skip("RAGQA_CHAT_ENDPOINT not set")
    budget = Budget(30 * 60)
    config = SweepConfig.from_dict({
        "corpus": {"path": os.environ.get("RAGQA_SMOKE_CORPUS", "fixture"),
                   "format": os.environ.get("RAGQA_SMOKE_FORMAT", "generic-json")},
        "generator": {"kind": "http-chat", "endpoint": os.environ["RAGQA_CHAT_ENDPOINT"],
                      "model_name": os.environ.get("RAGQA_CHAT_MODEL", "")},
        "grid": {"chunk_size": [100, 300], "overlap": [0.0]},
        "question_limit": 20,
    })
    out = run_sweep(config, tmp_path)
    rows = list(csv.DictReader((tmp_path / "results.csv").open()))
    note(request, f"{len(rows)} rows, statuses {[r['status'] for r in rows]}, {budget.elapsed:.0f}s")
    assert len(rows) == 2 and all(r["status"] == "ok" for r in rows)
    table = [line for line in (tmp_path / "results.md").read_text().splitlines() if line.startswith("|")]
    assert len(table) == 4 and [line.split("|")[1].strip() for line in table[2:]] == ["100", "300"]
    assert not out.skipped
    budget.check()


@pytest.mark.acceptance(2, "metric oracle equivalence")
def test_criterion_2_metric_oracle(request):
    budget = Budget(1)
    assert len(PAIRS) == 25
    worst = 0.0
    for pred, refs in PAIRS:
        r = score("q", pred, refs)
        expected = reference_metrics(pred, refs)
        worst = max(worst, *(abs(a - b) for a, b in zip((r.em, r.precision, r.recall, r.f1), expected)))
    p, rec, f1, _ = precision_recall_f1(VERBOSE_PRED, ["The Drug Enforcement Administration"])
    note(request, f"25 pairs, max deviation {worst:.1e}; verbosity P={p:.4f} R={rec} F1={f1}; "
                  f"{budget.elapsed:.2f}s")
    assert worst <= 1e-9
    assert rec == 1.0 and abs(p - 4 / 12) <= 1e-9 and abs(f1 - 0.5) <= 1e-9
    budget.check()


@pytest.mark.acceptance(3, "Porter vocabulary pinning")
def test_criterion_3_porter(request, data_dir):
    budget = Budget(5)
    stem.cache_clear()
    words = (data_dir / "porter_vocabulary.txt").read_text().split()
    expected = (data_dir / "porter_output.txt").read_text().split()
    mismatches = sum(stem(w) != e for w, e in zip(words, expected))
    note(request, f"{len(words)} words, {mismatches} mismatches, {budget.elapsed:.2f}s")
    assert len(words) == len(expected) == 23531
    assert mismatches == 0
    budget.check()


def oracle_ranking(vectors, query, n, metric):
    q = np.asarray(query, dtype=float)
    qn = math.sqrt(float(np.dot(q, q)))
    keyed = []
    for item_id, v in enumerate(vectors):
        if metric == "cosine":
            keyed.append((-float(np.dot(v, q)) / (math.sqrt(float(np.dot(v, v))) * qn), item_id))
        else:
            d = v - q
            keyed.append((math.sqrt(float(np.dot(d, d))), item_id))
    return [item_id for _, item_id in sorted(keyed)[:n]]


@pytest.mark.acceptance(4, "retrieval oracle equivalence")
def test_criterion_4_retrieval_oracle(request):
    budget = Budget(60)
    rng = np.random.default_rng(20240416)
    agree = ties_seen = 0
    for trial in range(500):
        dim = int(rng.choice([8, 64, 384]))
        count = int(rng.integers(1, 1001))
        n = int(rng.choice([1, 2, 5, 15]))
        metric = ("cosine", "pairwise")[trial % 2]
        if trial % 4 < 2:
            vectors = rng.integers(-2, 3, size=(count, dim)).astype(float)
            vectors[np.all(vectors == 0, axis=1), 0] = 1.0
            query = rng.integers(-2, 3, size=dim).astype(float)
            query[0] = query[0] or 1.0
        else:
            vectors = rng.normal(size=(count, dim))
            query = rng.normal(size=dim)
        if count > 2:
            vectors[count // 2] = vectors[0]
        hits = VectorStore([None] * count, vectors).top_n(query, n, metric)
        got = [h.item_id for h in hits]
        ties_seen += len({h.score for h in hits}) < len(hits)
        agree += got == oracle_ranking(vectors, query, n, metric)
    note(request, f"{agree}/500 trials agree ({ties_seen} with tied scores in the result), "
                  f"{budget.elapsed:.1f}s")
    assert agree == 500
    budget.check()


def orders_match(a_ids, b_ids, scores_by_id, tol=1e-12):
    """Equal orders, allowing swaps only between items whose scores tie within tol."""
    return all(x == y or abs(scores_by_id[x] - scores_by_id[y]) <= tol for x, y in zip(a_ids, b_ids))


@pytest.mark.acceptance(5, "cosine scale invariance, pairwise magnitude witness")
def test_criterion_5_scaling(request):
    budget = Budget(10)
    rng = np.random.default_rng(5)
    held = 0
    for trial in range(200):
        dim = int(rng.choice([8, 64, 384]))
        count = int(rng.integers(2, 300))
        vectors = rng.normal(size=(count, dim))
        query = rng.normal(size=dim)
        base = VectorStore([None] * count, vectors)
        ranked = base.top_n(query, count, "cosine")
        by_id = {h.item_id: h.score for h in ranked}
        scaled_q = base.top_n(query * float(rng.uniform(1e-3, 1e3)), count, "cosine")
        factors = rng.uniform(1e-3, 1e3, size=(count, 1))
        scaled_v = VectorStore([None] * count, vectors * factors).top_n(query, count, "cosine")
        ids = [h.item_id for h in ranked]
        held += (orders_match(ids, [h.item_id for h in scaled_q], by_id)
                 and orders_match(ids, [h.item_id for h in scaled_v], by_id))

    query = [1.0, 0.0]
    before = VectorStore([None, None], [[1.0, 0.0], [0.6, 0.8]])
    after = VectorStore([None, None], [[3.0, 0.0], [0.6, 0.8]])
    l2 = (before.top_n(query, 1, "pairwise")[0].item_id, after.top_n(query, 1, "pairwise")[0].item_id)
    cos = (before.top_n(query, 1, "cosine")[0].item_id, after.top_n(query, 1, "cosine")[0].item_id)
    note(request, f"{held}/200 scaling trials invariant; witness pairwise top-1 {l2[0]}->{l2[1]}, "
                  f"cosine top-1 {cos[0]}->{cos[1]}; {budget.elapsed:.2f}s")
    assert held == 200
    assert l2 == (0, 1) and cos == (0, 0)
    budget.check()


@pytest.mark.acceptance(6, "chunker exactness")
def test_criterion_6_chunker(request):
    budget = Budget(10)
    rng = random.Random(6)
    words = ["harbor", "bridge", "cable", "a", "the", "inspection", "Dr.", "said", "14", "repairs."]
    bad = []
    for trial in range(200):
        text = " ".join(rng.choice(words) for _ in range(rng.randint(0, 150)))
        spec = ChunkingSpec("fixed", rng.choice([25, 50, 100, 200, 300, 400]), rng.choice([0.0, 0.1, 0.2]))
        chunks = split_fixed(Document("d", text), spec)
        stride = spec.chunk_size - math.floor(spec.overlap * spec.chunk_size)
        ok = spec.stride == stride
        ok &= [c.char_start for c in chunks] == [i * stride for i in range(len(chunks))]
        ok &= all(c.text == text[c.char_start:c.char_end] and c.char_end - c.char_start <= spec.chunk_size
                  for c in chunks)
        ok &= all(a.char_start < b.char_start and a.char_end <= b.char_end for a, b in zip(chunks, chunks[1:]))
        covered = set().union(*(range(c.char_start, c.char_end) for c in chunks)) if chunks else set()
        ok &= covered == set(range(len(text)))
        ok &= all(c.char_end - c.char_start == spec.chunk_size for c in chunks[:-1])
        if spec.overlap == 0.0:
            ok &= "".join(c.text for c in chunks) == text
        if not ok:
            bad.append((trial, spec))
    text250 = "abcdefghij" * 25
    worked = ([c.span for c in split_fixed(Document("d", text250), ChunkingSpec("fixed", 100, 0.0))]
              == [(0, 100), (100, 200), (200, 250)]
              and [c.span for c in split_fixed(Document("d", text250), ChunkingSpec("fixed", 100, 0.1))]
              == [(0, 100), (90, 190), (180, 250)])
    note(request, f"{200 - len(bad)}/200 documents satisfy all invariants; 250-char examples "
                  f"{'match' if worked else 'differ'}; {budget.elapsed:.2f}s")
    assert not bad and worked
    budget.check()


FULL_GRID = {"chunk_size": [100, 200, 400], "overlap": [0.0, 0.1], "metric": ["cosine", "pairwise"],
             "top_n": [1, 2]}


@pytest.mark.acceptance(7, "end-to-end offline determinism")
def test_criterion_7_offline_sweep(request, tmp_path):
    budget = Budget(60)
    config = SweepConfig.from_dict({"grid": FULL_GRID})
    first = run_sweep(config, tmp_path / "run1")
    run_sweep(config, tmp_path / "run2")
    identical = (tmp_path / "run1/results.csv").read_bytes() == (tmp_path / "run2/results.csv").read_bytes()
    log = (tmp_path / "run1/cells/c100_o0_cosine_n2_chunk_concise-v1.jsonl").read_text()
    perfect = log.count('"f1": 1.0')
    note(request, f"{len(first.rows)} cells, results.csv identical={identical}, {perfect} question(s) "
                  f"at F1 1.0 under chunk 100/overlap 0/cosine/top 2; {budget.elapsed:.1f}s")
    assert len(first.rows) >= 12 and all(r.status == "ok" for r in first.rows)
    assert identical and perfect >= 1
    budget.check()


@pytest.mark.acceptance(8, "back-retrieval contract")
def test_criterion_8_back_retrieval(request, fixture_corpus):
    budget = Budget(5)
    rng = random.Random(8)
    docs = list(fixture_corpus.documents.values())
    agree = 0
    for trial in range(50):
        doc = rng.choice(docs)
        sentences = split_sentences(doc)
        picked = rng.sample(sentences, rng.randint(1, min(4, len(sentences))))
        hits = [RetrievalHit(s.index, s, 0.0, rank) for rank, s in enumerate(picked, 1)]
        fixed = split_fixed(doc, ChunkingSpec("fixed", rng.choice([25, 50, 100, 200, 300, 400]),
                                              rng.choice([0.0, 0.1, 0.2])))
        expected = sorted({c.index for c in fixed for s in picked
                           if max(c.char_start, s.char_start) < min(c.char_end, s.char_end)})
        got = back_retrieve_context(hits, fixed)
        agree += [c.index for c in got] == expected and len(got) == len({c.index for c in got})
    note(request, f"{agree}/50 randomized hit sets match the interval oracle; {budget.elapsed:.2f}s")
    assert agree == 50
    budget.check()


@pytest.mark.acceptance(9, "small-chunk trend with the offline stack", binding=False)
def test_criterion_9_trend_recorded(request, fixture_corpus):
    pipeline = QAPipeline(fixture_corpus)

    def mean_f1(size):
        config = PipelineConfig(ChunkingSpec("fixed", size, 0.0), metric="cosine", top_n=2)
        results = [(ex, pipeline.answer_question(ex, config)) for ex in fixture_corpus.examples]
        return sum(score(ex.qid, r.predicted_answer, ex.reference_answers).f1
                   for ex, r in results) / len(results)

    small, large = mean_f1(100), mean_f1(400)
    held = "holds" if small >= large else "does not hold"
    note(request, f"mean F1 chunk 100 = {small:.3f}, chunk 400 = {large:.3f}; trend {held} "
                  "(non-binding, see README)")
