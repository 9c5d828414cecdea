"""Documents, QA pairs and the JSON loaders that produce them.

Three on-disk layouts are understood:

``generic-json``
    ``{"documents": [{"doc_id", "text", "source"}], "examples": [{"qid",
    "doc_id", "question", "answers": [...]}]}``. An example may carry
    ``"unanswerable": true``. A bare empty list ``[]`` is accepted as an
    empty corpus.

``newsqa-json``
    The combined NewsQA file: ``{"data": [{"storyId", "text", "questions":
    [{"q", "consensus": {"s", "e"} | {"noAnswer": true} | {"badQuestion":
    true}}]}]}``. Reference answers are ``text[s:e]`` of the *raw* story.

``qaconv-json``
    ``{"article_segment": {seg_id: {"seg_dialog": [{"speaker", "text"}]}},
    "qa": [{"id", "article_segment_id", "question", "answers": [...]}]}``,
    i.e. QAConv's ``article_segment.json`` and one QA split merged into a
    single object. Dialogue turns become ``"speaker: text"`` lines.
"""

from __future__ import annotations

import json
import re
import unicodedata
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Iterable, Mapping

from .errors import FileMissing, IntegrityError, ParseFailure

UNANSWERABLE = "unanswerable"
FORMATS = ("generic-json", "newsqa-json", "qaconv-json")

_NEWLINE_RUN = re.compile(r"\n(?:[^\S\n]*\n)*")


def clean_text(raw: str) -> str:
    """Strip control characters and collapse whitespace.

    Every run of newlines (blank lines included) becomes one ``\\n``; any
    other whitespace run becomes a single space; lines are trimmed and so is
    the whole result. The function is idempotent.
    """
    raw = raw.replace("\r\n", "\n").replace("\r", "\n")
    chars = []
    for ch in raw:
        if ch == "\n":
            chars.append(ch)
        elif ch.isspace():
            chars.append(" ")
        elif unicodedata.category(ch) == "Cc":
            continue
        else:
            chars.append(ch)
    text = _NEWLINE_RUN.sub("\n", "".join(chars))
    lines = (" ".join(line.split()) for line in text.split("\n"))
    return "\n".join(line for line in lines if line)


@dataclass(frozen=True)
class Document:
    doc_id: str
    text: str
    source: str = ""


@dataclass(frozen=True)
class QAExample:
    qid: str
    doc_id: str
    question: str
    reference_answers: tuple[str, ...]
    unanswerable: bool = False


@dataclass(frozen=True)
class Corpus:
    documents: Mapping[str, Document] = field(default_factory=dict)
    examples: tuple[QAExample, ...] = ()

    def __post_init__(self):
        dangling = [ex.qid for ex in self.examples if ex.doc_id not in self.documents]
        if dangling:
            raise IntegrityError(
                f"{len(dangling)} example(s) reference unknown documents: {dangling}",
                dangling_qids=dangling,
            )

    def example(self, qid: str) -> QAExample:
        for ex in self.examples:
            if ex.qid == qid:
                return ex
        raise KeyError(qid)

    def examples_for(self, doc_id: str) -> list[QAExample]:
        return [ex for ex in self.examples if ex.doc_id == doc_id]


def _make_document(doc_id, text, source, where) -> Document:
    if not isinstance(doc_id, str) or not doc_id:
        raise ParseFailure(f"{where}: doc_id must be a non-empty string")
    if not isinstance(text, str):
        raise ParseFailure(f"{where}: text must be a string")
    return Document(doc_id=doc_id, text=clean_text(text), source=str(source or ""))


def _make_example(qid, doc_id, question, answers, where, unanswerable=False) -> QAExample:
    if not isinstance(qid, str) or not qid:
        raise ParseFailure(f"{where}: qid must be a non-empty string")
    if not isinstance(question, str):
        raise ParseFailure(f"{where}: question must be a string")
    if isinstance(answers, str):
        answers = [answers]
    if not isinstance(answers, list):
        raise ParseFailure(f"{where}: answers must be a list of strings")
    cleaned = [clean_text(a) for a in answers if isinstance(a, str)]
    cleaned = [a for a in cleaned if a]
    if not cleaned:
        cleaned, unanswerable = [UNANSWERABLE], True
    return QAExample(
        qid=qid,
        doc_id=doc_id,
        question=clean_text(question),
        reference_answers=tuple(cleaned),
        unanswerable=bool(unanswerable),
    )


def build_corpus(documents: Iterable[Document], examples: Iterable[QAExample]) -> Corpus:
    """Assemble a corpus, rejecting duplicate ids and dangling references."""
    docs: dict[str, Document] = {}
    for doc in documents:
        if doc.doc_id in docs:
            raise ParseFailure(f"duplicate doc_id {doc.doc_id!r}")
        docs[doc.doc_id] = doc
    seen = set()
    exs = []
    for ex in examples:
        if ex.qid in seen:
            raise ParseFailure(f"duplicate qid {ex.qid!r}")
        seen.add(ex.qid)
        exs.append(ex)
    return Corpus(documents=docs, examples=tuple(exs))


def _parse_generic(payload) -> Corpus:
    if payload == []:
        return Corpus()
    if not isinstance(payload, dict):
        raise ParseFailure("generic-json: top level must be an object")
    docs = []
    for i, rec in enumerate(payload.get("documents", [])):
        try:
            docs.append(_make_document(rec["doc_id"], rec["text"], rec.get("source", ""), f"documents[{i}]"))
        except (KeyError, TypeError) as exc:
            raise ParseFailure(f"documents[{i}]: missing field {exc}") from exc
    exs = []
    for i, rec in enumerate(payload.get("examples", [])):
        try:
            exs.append(_make_example(rec["qid"], rec["doc_id"], rec["question"], rec["answers"],
                                     f"examples[{i}]", rec.get("unanswerable", False)))
        except (KeyError, TypeError) as exc:
            raise ParseFailure(f"examples[{i}]: missing field {exc}") from exc
    return build_corpus(docs, exs)


def _parse_newsqa(payload) -> Corpus:
    if isinstance(payload, list):
        stories = payload
    elif isinstance(payload, dict):
        stories = payload.get("data", [])
    else:
        raise ParseFailure("newsqa-json: expected an object with a 'data' list")
    docs, exs = [], []
    for i, story in enumerate(stories):
        where = f"data[{i}]"
        try:
            story_id, raw = story["storyId"], story["text"]
        except (KeyError, TypeError) as exc:
            raise ParseFailure(f"{where}: missing field {exc}") from exc
        docs.append(_make_document(story_id, raw, story.get("type", "newsqa"), where))
        for j, q in enumerate(story.get("questions", [])):
            consensus = q.get("consensus") or {}
            answers = []
            if "s" in consensus and "e" in consensus:
                answers = [raw[int(consensus["s"]):int(consensus["e"])]]
            exs.append(_make_example(f"{story_id}#{j}", story_id, q.get("q", ""), answers,
                                     f"{where}.questions[{j}]"))
    return build_corpus(docs, exs)


def _parse_qaconv(payload) -> Corpus:
    if not isinstance(payload, dict) or "article_segment" not in payload:
        raise ParseFailure("qaconv-json: expected an object with 'article_segment' and 'qa'")
    docs = []
    for seg_id, seg in payload["article_segment"].items():
        turns = seg.get("seg_dialog", []) if isinstance(seg, dict) else seg
        try:
            lines = [f"{t.get('speaker', '')}: {t['text']}" for t in turns]
        except (KeyError, TypeError, AttributeError) as exc:
            raise ParseFailure(f"article_segment[{seg_id!r}]: bad turn record") from exc
        docs.append(_make_document(seg_id, "\n\n".join(lines), "qaconv", f"article_segment[{seg_id!r}]"))
    exs = []
    for i, rec in enumerate(payload.get("qa", [])):
        try:
            exs.append(_make_example(rec["id"], rec["article_segment_id"], rec["question"],
                                     rec.get("answers", []), f"qa[{i}]"))
        except (KeyError, TypeError) as exc:
            raise ParseFailure(f"qa[{i}]: missing field {exc}") from exc
    return build_corpus(docs, exs)


_PARSERS = {
    "generic-json": _parse_generic,
    "newsqa-json": _parse_newsqa,
    "qaconv-json": _parse_qaconv,
}


def load_corpus(path, format: str = "generic-json") -> Corpus:
    path = Path(path)
    if format not in _PARSERS:
        raise ParseFailure(f"unknown corpus format {format!r}; expected one of {FORMATS}")
    if not path.exists():
        raise FileMissing(f"corpus file not found: {path}")
    try:
        payload = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ParseFailure(f"{path}: line {exc.lineno} col {exc.colno}: {exc.msg}") from exc
    return _PARSERS[format](payload)


def corpus_to_generic(corpus: Corpus) -> dict:
    examples = []
    for ex in corpus.examples:
        rec = {"qid": ex.qid, "doc_id": ex.doc_id, "question": ex.question,
               "answers": list(ex.reference_answers)}
        if ex.unanswerable:
            rec["unanswerable"] = True
        examples.append(rec)
    return {
        "documents": [{"doc_id": d.doc_id, "text": d.text, "source": d.source}
                      for d in corpus.documents.values()],
        "examples": examples,
    }


def save_corpus(corpus: Corpus, path) -> None:
    Path(path).write_text(json.dumps(corpus_to_generic(corpus), ensure_ascii=False, indent=1),
                          encoding="utf-8")


def fixture_path() -> Path:
    return Path(str(resources.files("ragqa") / "data" / "fixture_corpus.json"))


def load_fixture() -> Corpus:
    """The small bundled corpus (3 stories, 6 questions) used by offline tests."""
    return load_corpus(fixture_path(), "generic-json")
