"""Stemmed exact-match and token-overlap metrics for QA answers.

Both sides are normalised the same way: lowercase, turn every Unicode
punctuation character (category ``P*``) into a space, split on whitespace,
Porter-stem. "Jackson's" therefore yields two tokens, ``jackson`` and ``s``.
Precision/recall use multiset overlap of the stemmed tokens. With several
references the one with the highest F1 is reported (lowest index on ties);
EM is 1 if the prediction matches *any* reference.
"""

from __future__ import annotations

import json
import math
import unicodedata
from collections import Counter
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

from .corpus import Corpus
from .errors import InvalidInput, ParseFailure
from .porter import stem

ARTICLES = frozenset({"a", "an", "the"})


def _punct_to_space(text: str) -> str:
    return "".join(" " if unicodedata.category(ch).startswith("P") else ch for ch in text)


def normalize_tokens(answer: str, drop_articles: bool = False) -> list[str]:
    tokens = _punct_to_space(answer.lower()).split()
    if drop_articles:
        tokens = [t for t in tokens if t not in ARTICLES]
    return [stem(t) for t in tokens]


def exact_match(pred: str, refs: Sequence[str], drop_articles: bool = False) -> int:
    if not refs:
        raise InvalidInput("exact_match needs at least one reference")
    pred_toks = normalize_tokens(pred, drop_articles)
    if not pred_toks:
        return 0
    return int(any(pred_toks == normalize_tokens(r, drop_articles) for r in refs))


def overlap_scores(pred_toks: Sequence[str], ref_toks: Sequence[str]) -> tuple[float, float, float]:
    """Precision, recall and F1 of two stemmed token lists."""
    common = sum((Counter(pred_toks) & Counter(ref_toks)).values())
    precision = common / len(pred_toks) if pred_toks else 0.0
    recall = common / len(ref_toks) if ref_toks else 0.0
    # 2PR/(P+R) expressed on the integer counts, so equal ratios give equal floats.
    f1 = 2 * common / (len(pred_toks) + len(ref_toks)) if common else 0.0
    return precision, recall, f1


def precision_recall_f1(pred: str, refs: Sequence[str],
                        drop_articles: bool = False) -> tuple[float, float, float, int]:
    if not refs:
        raise InvalidInput("precision_recall_f1 needs at least one reference")
    pred_toks = normalize_tokens(pred, drop_articles)
    best = None
    for i, ref in enumerate(refs):
        p, r, f = overlap_scores(pred_toks, normalize_tokens(ref, drop_articles))
        if best is None or f > best[2]:
            best = (p, r, f, i)
    return best


@dataclass(frozen=True)
class MetricReport:
    qid: str
    em: int
    precision: float
    recall: float
    f1: float
    matched_reference: int


def score(qid: str, pred: str, refs: Sequence[str], drop_articles: bool = False) -> MetricReport:
    p, r, f, idx = precision_recall_f1(pred, refs, drop_articles)
    return MetricReport(qid, exact_match(pred, refs, drop_articles), p, r, f, idx)


@dataclass(frozen=True)
class AggregateReport:
    n_questions: int
    em: float
    precision: float
    recall: float
    f1: float
    config: dict = field(default_factory=dict)

    def as_dict(self) -> dict:
        return asdict(self)


def aggregate(reports: Iterable[MetricReport], config: dict | None = None) -> AggregateReport:
    """Arithmetic means over per-question reports (order-independent)."""
    reports = list(reports)
    if not reports:
        raise InvalidInput("cannot aggregate an empty list of reports")

    def mean(values):
        return math.fsum(values) / len(reports)

    return AggregateReport(
        n_questions=len(reports),
        em=mean(r.em for r in reports),
        precision=mean(r.precision for r in reports),
        recall=mean(r.recall for r in reports),
        f1=mean(r.f1 for r in reports),
        config=dict(config or {}),
    )


def read_predictions(path) -> dict[str, str]:
    """Load ``{"qid", "predicted_answer"}`` JSON lines into a dict."""
    preds = {}
    with open(Path(path), encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            try:
                rec = json.loads(line)
                preds[str(rec["qid"])] = str(rec["predicted_answer"])
            except (ValueError, KeyError, TypeError) as exc:
                raise ParseFailure(f"{path}:{lineno}: bad prediction record ({exc})") from exc
    return preds


def evaluate_predictions(predictions: dict[str, str], corpus: Corpus,
                         drop_articles: bool = False) -> tuple[list[MetricReport], AggregateReport]:
    """Score external predictions. Questions without a prediction count as
    an empty answer; predictions for unknown qids are an error."""
    known = {ex.qid for ex in corpus.examples}
    unknown = sorted(set(predictions) - known)
    if unknown:
        raise InvalidInput(f"predictions for unknown qids: {unknown[:10]}")
    reports = [score(ex.qid, predictions.get(ex.qid, ""), ex.reference_answers, drop_articles)
               for ex in corpus.examples]
    return reports, aggregate(reports, {"source": "predictions"})
