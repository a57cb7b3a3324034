"""Chunk record type and its JSONL wire format."""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass
from datetime import date
from typing import Iterable

import numpy as np

from .errors import StoreError

UNIT_NORM_TOLERANCE = 1e-6

# Wire order of chunk record fields. Serialization always emits keys in this
# order so identical stores produce identical bytes.
CHUNK_FIELDS = (
    "chunk_id",
    "text",
    "title",
    "title_summary",
    "document_id",
    "page_start",
    "page_end",
    "publication_date",
    "segment_id",
    "prev_id",
    "next_id",
    "dense",
    "sparse",
    "meta_dense",
)


def chunk_id_for(text: str) -> str:
    """Content-addressed chunk id: hex SHA-256 of the refined text."""
    return hashlib.sha256(text.encode("utf-8")).hexdigest()


@dataclass
class Chunk:
    """One retrievable unit: refined text plus metadata and three representations.

    ``dense`` and ``meta_dense`` are unit-norm float64 vectors; ``sparse`` maps
    each term of the refined text to its frequency. ``prev_id``/``next_id``
    link adjacent chunks of the same document and are symmetric.
    """

    chunk_id: str
    text: str
    title: str
    title_summary: str
    document_id: str
    page_start: int
    page_end: int
    publication_date: date | None
    segment_id: str
    prev_id: str | None
    next_id: str | None
    dense: np.ndarray
    sparse: dict[str, int]
    meta_dense: np.ndarray

    def validate(self) -> None:
        if self.chunk_id != chunk_id_for(self.text):
            raise StoreError(
                "chunk-id-mismatch",
                f"chunk_id is not the SHA-256 of the text for {self.chunk_id}",
                chunk_id=self.chunk_id,
            )
        if self.page_start > self.page_end:
            raise StoreError(
                "bad-pages",
                f"page_start > page_end for {self.chunk_id}",
                chunk_id=self.chunk_id,
            )
        if self.publication_date is not None and not isinstance(self.publication_date, date):
            raise StoreError(
                "bad-record",
                f"publication_date must be a date, got {type(self.publication_date).__name__}",
                chunk_id=self.chunk_id,
            )
        for name, vec in (("dense", self.dense), ("meta_dense", self.meta_dense)):
            if vec.ndim != 1 or vec.shape[0] < 1:
                raise StoreError("bad-vector", f"{name} must be a non-empty vector")
            norm = float(np.linalg.norm(vec))
            if abs(norm - 1.0) > UNIT_NORM_TOLERANCE:
                raise StoreError(
                    "bad-vector",
                    f"{name} of {self.chunk_id} is not unit-norm (|v|={norm!r})",
                    chunk_id=self.chunk_id,
                )
        for term, count in self.sparse.items():
            if not isinstance(term, str) or not isinstance(count, int) or count < 1:
                raise StoreError("bad-sparse", f"bad sparse entry {term!r} in {self.chunk_id}")


def to_record(chunk: Chunk) -> dict:
    return {
        "chunk_id": chunk.chunk_id,
        "text": chunk.text,
        "title": chunk.title,
        "title_summary": chunk.title_summary,
        "document_id": chunk.document_id,
        "page_start": chunk.page_start,
        "page_end": chunk.page_end,
        "publication_date": chunk.publication_date.isoformat() if chunk.publication_date else None,
        "segment_id": chunk.segment_id,
        "prev_id": chunk.prev_id,
        "next_id": chunk.next_id,
        "dense": [float(x) for x in chunk.dense],
        "sparse": {term: int(chunk.sparse[term]) for term in sorted(chunk.sparse)},
        "meta_dense": [float(x) for x in chunk.meta_dense],
    }


def from_record(record: dict) -> Chunk:
    missing = [f for f in CHUNK_FIELDS if f not in record]
    if missing:
        raise StoreError("bad-record", f"chunk record missing fields: {', '.join(missing)}")
    raw_date = record["publication_date"]
    if raw_date is None:
        publication_date = None
    else:
        try:
            publication_date = date.fromisoformat(raw_date)
        except (TypeError, ValueError) as exc:
            raise StoreError("bad-record", f"bad publication_date {raw_date!r}: {exc}") from exc
    try:
        chunk = Chunk(
            chunk_id=record["chunk_id"],
            text=record["text"],
            title=record["title"],
            title_summary=record["title_summary"],
            document_id=record["document_id"],
            page_start=int(record["page_start"]),
            page_end=int(record["page_end"]),
            publication_date=publication_date,
            segment_id=record["segment_id"],
            prev_id=record["prev_id"],
            next_id=record["next_id"],
            dense=np.asarray(record["dense"], dtype=np.float64),
            sparse={str(k): int(v) for k, v in record["sparse"].items()},
            meta_dense=np.asarray(record["meta_dense"], dtype=np.float64),
        )
    except (TypeError, ValueError) as exc:
        raise StoreError("bad-record", f"malformed chunk record: {exc}") from exc
    chunk.validate()
    return chunk


def dumps_record(chunk: Chunk) -> str:
    return json.dumps(to_record(chunk), ensure_ascii=False)


def write_jsonl(chunks: Iterable[Chunk], path) -> int:
    count = 0
    with open(path, "w", encoding="utf-8") as handle:
        for chunk in chunks:
            handle.write(dumps_record(chunk) + "\n")
            count += 1
    return count


def read_jsonl(path) -> list[Chunk]:
    chunks = []
    try:
        with open(path, "r", encoding="utf-8") as handle:
            for line_no, line in enumerate(handle, start=1):
                if not line.strip():
                    continue
                try:
                    record = json.loads(line)
                except json.JSONDecodeError as exc:
                    raise StoreError(
                        "bad-record", f"line {line_no}: invalid JSON: {exc}", line=line_no
                    ) from exc
                chunks.append(from_record(record))
    except OSError as exc:
        raise StoreError("missing-file", f"cannot read {path}: {exc}") from exc
    return chunks
