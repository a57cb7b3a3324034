"""Tokenization and sentence-boundary helpers used by ingest, indexing, and stubs."""

from __future__ import annotations

import hashlib
import re

_TOKEN_RE = re.compile(r"[a-z0-9]+")
# Boundary: sentence punctuation followed by whitespace. The boundary index
# points at the first whitespace character, so sentences keep their punctuation.
_SENTENCE_BOUNDARY_RE = re.compile(r"[.?!;](?=\s)")


def tokenize(text: str) -> list[str]:
    """Lowercase alphanumeric tokens, in order of appearance."""
    return _TOKEN_RE.findall(text.lower())


def sentence_spans(text: str) -> list[tuple[int, int]]:
    """(start, end) spans of the sentences in ``text``, trimmed of whitespace.

    Spans are in order and non-overlapping; only inter-sentence whitespace
    falls between them. Text without any boundary yields a single span;
    whitespace-only text yields none.
    """
    raw_ends = [m.end() for m in _SENTENCE_BOUNDARY_RE.finditer(text)]
    raw_ends.append(len(text))
    spans = []
    cursor = 0
    for raw_end in raw_ends:
        segment = text[cursor:raw_end]
        stripped = segment.strip()
        if stripped:
            leading = len(segment) - len(segment.lstrip())
            trailing = len(segment) - len(segment.rstrip())
            spans.append((cursor + leading, raw_end - trailing))
        cursor = raw_end
    return spans


def char_trigrams(text: str) -> list[str]:
    """Character 3-grams; texts shorter than 3 chars yield themselves as one gram."""
    if len(text) < 3:
        return [text]
    return [text[i : i + 3] for i in range(len(text) - 2)]


def stable_bucket(gram: str, dim: int) -> int:
    """Map a string to [0, dim) with a platform-stable hash."""
    digest = hashlib.blake2b(gram.encode("utf-8"), digest_size=8).digest()
    return int.from_bytes(digest, "big") % dim
