"""Sentence and fixed-window chunking with exact character spans.

Spans are half-open ``[char_start, char_end)`` offsets into the cleaned
document text, so ``chunk.text == doc.text[chunk.char_start:chunk.char_end]``
always holds and retrieved units can be mapped back onto each other.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass
from typing import Sequence

from .corpus import Document
from .errors import InvalidInput, InvalidSpec

MAX_OVERLAP = 0.5

# Tokens ending in "." that never end a sentence. Case-sensitive.
ABBREVIATIONS = frozenset(
    """
    Mr. Mrs. Ms. Mx. Dr. Prof. Sr. Jr. St. Mt. Ft. Rev. Hon. Gen. Col. Lt.
    Capt. Cmdr. Sgt. Maj. Adm. Gov. Sen. Rep. Pres. Sec. Atty. Supt. Insp.
    Inc. Ltd. Co. Corp. Bros. Dept. Univ. Assn. No. Nos. Vol. Fig. Figs.
    vs. etc. approx. cf. al. Jan. Feb. Mar. Apr. Jun. Jul. Aug. Sep. Sept.
    Oct. Nov. Dec. Ave. Blvd. Rd.
    """.split()
)
_DOTTED_ACRONYM = re.compile(r"^(?:[A-Za-z]\.){2,}$")  # U.S., U.K., e.g., i.e.
_INITIAL = re.compile(r"^[A-Z]\.$")
_CLOSERS = "\"')]}”’"
_TERMINATOR = re.compile(r"[.!?]+[" + re.escape(_CLOSERS) + r"]*")


@dataclass(frozen=True)
class Chunk:
    doc_id: str
    index: int
    char_start: int
    char_end: int
    text: str
    kind: str

    @property
    def span(self) -> tuple[int, int]:
        return (self.char_start, self.char_end)


@dataclass(frozen=True)
class ChunkingSpec:
    """How to cut a document.

    ``chunk_size`` counts characters by default; ``unit="words"`` switches to
    whitespace-delimited words (spans still in characters).
    """

    strategy: str = "fixed"
    chunk_size: int = 100
    overlap: float = 0.0
    unit: str = "chars"

    def __post_init__(self):
        self.validate()

    @property
    def stride(self) -> int:
        return self.chunk_size - math.floor(self.overlap * self.chunk_size + 1e-9)

    def validate(self) -> None:
        if self.strategy not in ("sentence", "fixed"):
            raise InvalidSpec(f"unknown chunking strategy {self.strategy!r}")
        if self.strategy == "sentence":
            return
        if self.unit not in ("chars", "words"):
            raise InvalidSpec(f"unknown chunk unit {self.unit!r}")
        if isinstance(self.chunk_size, bool) or not isinstance(self.chunk_size, int) or self.chunk_size < 1:
            raise InvalidSpec(f"chunk_size must be a positive integer, got {self.chunk_size!r}")
        if not 0.0 <= self.overlap <= MAX_OVERLAP:
            raise InvalidSpec(f"overlap must lie in [0, {MAX_OVERLAP}], got {self.overlap!r}")
        if self.stride < 1:
            raise InvalidSpec("stride must be at least 1")


def _is_abbreviation(token: str) -> bool:
    token = token.lstrip("\"'([{“‘")
    return token in ABBREVIATIONS or bool(_INITIAL.match(token) or _DOTTED_ACRONYM.match(token))


def sentence_spans(text: str) -> list[tuple[int, int]]:
    spans: list[tuple[int, int]] = []
    for m in _TERMINATOR.finditer(text):
        nxt = _skip_space(text, m.end())
        if nxt < len(text):
            if nxt == m.end():
                continue
            follower = text[nxt]
            if follower in "\"'(“‘" and nxt + 1 < len(text):
                follower = text[nxt + 1]
            if not follower.isupper():
                continue
        if m.group().rstrip(_CLOSERS) == ".":
            word_start = m.start()
            while word_start > 0 and not text[word_start - 1].isspace():
                word_start -= 1
            if _is_abbreviation(text[word_start:m.start() + 1]):
                continue
        seg_start = _skip_space(text, spans[-1][1] if spans else 0)
        spans.append((seg_start, m.end()))
    seg_start = _skip_space(text, spans[-1][1] if spans else 0)
    seg_end = len(text.rstrip())
    if seg_start < seg_end:
        spans.append((seg_start, seg_end))
    return spans


def _skip_space(text: str, pos: int) -> int:
    while pos < len(text) and text[pos].isspace():
        pos += 1
    return pos


def split_sentences(doc: Document) -> list[Chunk]:
    """Rule-based sentence chunks: a terminator (``.``, ``!``, ``?``) ends a
    sentence when followed by whitespace and an uppercase letter, or by the
    end of the text, unless the word it closes is a known abbreviation, a
    single-letter initial, or a dotted acronym."""
    return [
        Chunk(doc.doc_id, i, s, e, doc.text[s:e], "sentence")
        for i, (s, e) in enumerate(sentence_spans(doc.text))
    ]


def _window_starts(n: int, size: int, stride: int) -> list[int]:
    starts = []
    pos = 0
    while pos < n:
        starts.append(pos)
        if pos + size >= n:
            break
        pos += stride
    return starts


def split_fixed(doc: Document, spec: ChunkingSpec) -> list[Chunk]:
    """Fixed windows of ``spec.chunk_size`` advancing by ``spec.stride``.

    Windowing stops at the first window that reaches the end of the text, so
    the trailing chunk may be shorter than ``chunk_size`` and no chunk is
    wholly contained in its predecessor.
    """
    if spec.strategy != "fixed":
        raise InvalidSpec("split_fixed needs a fixed-strategy spec")
    spec.validate()
    text = doc.text
    if spec.unit == "words":
        words = [m.span() for m in re.finditer(r"\S+", text)]
        spans = [(words[i][0], words[min(i + spec.chunk_size, len(words)) - 1][1])
                 for i in _window_starts(len(words), spec.chunk_size, spec.stride)]
    else:
        spans = [(s, min(s + spec.chunk_size, len(text)))
                 for s in _window_starts(len(text), spec.chunk_size, spec.stride)]
    return [Chunk(doc.doc_id, i, s, e, text[s:e], "fixed") for i, (s, e) in enumerate(spans)]


def chunk_document(doc: Document, spec: ChunkingSpec) -> list[Chunk]:
    if spec.strategy == "sentence":
        return split_sentences(doc)
    return split_fixed(doc, spec)


def chunks_overlapping_span(chunks: Sequence[Chunk], span: tuple[int, int]) -> list[Chunk]:
    """Chunks whose span shares at least one character with ``span``, in
    document order."""
    if len({c.doc_id for c in chunks}) > 1:
        raise InvalidInput("chunks_overlapping_span needs chunks from a single document")
    start, end = span
    if start > end:
        raise InvalidInput(f"invalid span {span!r}")
    hits = [c for c in chunks if c.char_start < end and start < c.char_end]
    return sorted(hits, key=lambda c: (c.char_start, c.index))
