"""Answer generators: an HTTP chat-completions client and an offline
extractive oracle."""

from __future__ import annotations

import os
import re
import threading
import unicodedata
from collections import Counter
from dataclasses import dataclass
from typing import Sequence

import requests

from .errors import GenerationServiceError, InvalidSpec
from .evaluation import normalize_tokens

API_KEY_ENV = "RAGQA_API_KEY"
SYSTEM_PROMPT = "You answer questions using only the supplied context."
MAX_WINDOW = 8


class GenerationTimeout(GenerationServiceError):
    pass


@dataclass(frozen=True)
class GeneratorSpec:
    kind: str = "extractive-oracle"
    endpoint: str = ""
    model_name: str = ""
    temperature: float = 0.0
    timeout: float = 120.0
    retries: int = 1
    max_in_flight: int = 2
    system_prompt: str = SYSTEM_PROMPT

    def __post_init__(self):
        if self.kind not in ("http-chat", "extractive-oracle"):
            raise InvalidSpec(f"unknown generator kind {self.kind!r}")
        if self.temperature < 0:
            raise InvalidSpec("temperature must be >= 0")
        if self.kind == "http-chat" and not self.endpoint:
            raise InvalidSpec("http-chat generator needs an endpoint")

    def fingerprint(self) -> str:
        return self.kind if self.kind == "extractive-oracle" else f"http-chat:{self.model_name}"


def _is_punct(ch: str) -> bool:
    return unicodedata.category(ch).startswith("P")


class ExtractiveOracle:
    """Returns the context span of 1..8 whitespace tokens whose stemmed-token
    F1 against the references is highest.

    Ties go to the earliest start, then the shortest window. Leading and
    trailing punctuation is trimmed from the returned span. It reads the
    references, so it is an upper-bound stand-in for a language model, useful
    only for exercising the pipeline offline.
    """

    def __init__(self, max_window: int = MAX_WINDOW):
        self.max_window = max_window

    def generate(self, prompt: str, question: str, context: str,
                 references: Sequence[str] = ()) -> str:
        tokens = [(m.start(), m.end()) for m in re.finditer(r"\S+", context)]
        if not tokens or not references:
            return ""
        stemmed = [normalize_tokens(context[s:e]) for s, e in tokens]
        refs = [Counter(normalize_tokens(r)) for r in references]
        ref_lens = [sum(r.values()) for r in refs]
        best_f1, best = -1.0, (0, 0)
        for i in range(len(tokens)):
            bag: Counter = Counter()
            n_pred = 0
            for j in range(i, min(i + self.max_window, len(tokens))):
                bag.update(stemmed[j])
                n_pred += len(stemmed[j])
                f1 = 0.0
                for ref, n_ref in zip(refs, ref_lens):
                    common = sum((bag & ref).values())
                    if common:
                        f1 = max(f1, 2 * common / (n_pred + n_ref))
                if f1 > best_f1:
                    best_f1, best = f1, (i, j)
        start, end = tokens[best[0]][0], tokens[best[1]][1]
        span = context[start:end]
        lo, hi = 0, len(span)
        while lo < hi and _is_punct(span[lo]):
            lo += 1
        while hi > lo and _is_punct(span[hi - 1]):
            hi -= 1
        return span[lo:hi] if lo < hi else span


class ChatGenerator:
    """Client for a chat-completions endpoint: POST ``{"model", "messages",
    "temperature"}``, answer read from ``choices[0].message.content``."""

    def __init__(self, spec: GeneratorSpec, session: requests.Session | None = None):
        if spec.kind != "http-chat":
            raise InvalidSpec("ChatGenerator needs an http-chat spec")
        self.spec = spec
        self._session = session or requests.Session()
        self._slots = threading.BoundedSemaphore(max(1, spec.max_in_flight))

    def _headers(self) -> dict:
        headers = {"Content-Type": "application/json"}
        key = os.environ.get(API_KEY_ENV)
        if key:
            headers["Authorization"] = f"Bearer {key}"
        return headers

    def generate(self, prompt: str, question: str = "", context: str = "",
                 references: Sequence[str] = ()) -> str:
        payload = {
            "model": self.spec.model_name,
            "messages": [
                {"role": "system", "content": self.spec.system_prompt},
                {"role": "user", "content": prompt},
            ],
            "temperature": self.spec.temperature,
        }
        last_error: GenerationServiceError | None = None
        with self._slots:
            for _ in range(self.spec.retries + 1):
                try:
                    resp = self._session.post(self.spec.endpoint, json=payload,
                                              headers=self._headers(), timeout=self.spec.timeout)
                except requests.Timeout as exc:
                    last_error = GenerationTimeout(f"generation request timed out: {exc}")
                    continue
                except requests.RequestException as exc:
                    last_error = GenerationServiceError(f"generation request failed: {exc}")
                    continue
                if resp.status_code >= 500:
                    last_error = GenerationServiceError(f"generation service returned {resp.status_code}",
                                                        resp.status_code, resp.text[:200])
                    continue
                if resp.status_code != 200:
                    raise GenerationServiceError(f"generation service returned {resp.status_code}",
                                                 resp.status_code, resp.text[:200])
                try:
                    content = resp.json()["choices"][0]["message"]["content"]
                except (ValueError, KeyError, IndexError, TypeError) as exc:
                    raise GenerationServiceError("malformed chat completion response",
                                                 resp.status_code, resp.text[:200]) from exc
                return content if isinstance(content, str) else ""
        assert last_error is not None
        raise last_error


def make_generator(spec: GeneratorSpec):
    if spec.kind == "extractive-oracle":
        return ExtractiveOracle()
    return ChatGenerator(spec)


def generate(prompt: str, question: str, context: str, spec: GeneratorSpec,
             references: Sequence[str] = ()) -> str:
    return make_generator(spec).generate(prompt, question, context, references)


_BLANK_LINE = re.compile(r"\n[^\S\n]*\n")
_QUOTE_PAIRS = {'"': '"', "'": "'", "“": "”", "‘": "’", "`": "`"}


def postprocess_answer(raw: str) -> str:
    """Cut at the first blank line, trim, drop one pair of enclosing quotes,
    collapse whitespace."""
    text = _BLANK_LINE.split(raw.strip(), maxsplit=1)[0].strip()
    if len(text) >= 2 and _QUOTE_PAIRS.get(text[0]) == text[-1]:
        text = text[1:-1]
    return " ".join(text.split())
