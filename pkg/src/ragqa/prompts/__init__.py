"""Prompt templates stored as ``<template_id>.txt`` files.

A template holds ``{question}`` and ``{context}`` placeholders; no other
braces are interpreted.
"""

from __future__ import annotations

import re
from importlib import resources
from pathlib import Path

from ..errors import UnknownTemplate

NO_CONTEXT_MARKER = "(no context retrieved)"
CONCISE_INSTRUCTION = ("Please provide the answer in as few words as possible and do NOT "
                       "repeat any word in the question, i.e. '{question}'.")

_PLACEHOLDER = re.compile(r"\{(question|context)\}")
_registry: dict[str, str] = {}


def _load_bundled() -> None:
    for entry in resources.files(__name__).iterdir():
        if entry.name.endswith(".txt"):
            _registry.setdefault(entry.name[:-4], entry.read_text(encoding="utf-8"))


def register_template(template_id: str, text: str) -> None:
    _registry[template_id] = text


def register_directory(directory) -> list[str]:
    """Register every ``*.txt`` file in ``directory``; returns the new ids."""
    ids = []
    for path in sorted(Path(directory).glob("*.txt")):
        register_template(path.stem, path.read_text(encoding="utf-8"))
        ids.append(path.stem)
    return ids


def template_ids() -> list[str]:
    return sorted(_registry)


def get_template(template_id: str) -> str:
    try:
        return _registry[template_id]
    except KeyError:
        raise UnknownTemplate(f"unknown prompt template {template_id!r}; known: {template_ids()}") from None


def build_prompt(question: str, context: str, template_id: str = "concise-v1") -> str:
    """Fill a template in a single pass, so placeholder-like text inside the
    question or context is never substituted again."""
    template = get_template(template_id)
    values = {"question": question, "context": context if context.strip() else NO_CONTEXT_MARKER}
    return _PLACEHOLDER.sub(lambda m: values[m.group(1)], template)


_load_bundled()
