"""Chunk store: exhaustive dense search, Okapi BM25, and segment-metadata search.

All three searches are exact scans, deterministic given the stored chunks.
Score ties break by ascending chunk_id (ascending segment_id for segment
selection). The hot score loops live in :mod:`finsage.kernels`.

On disk a store is a directory:

* ``manifest.json``  -- counts, embedding dim, BM25 parameters, documents
* ``chunks.jsonl``   -- one chunk record per line (authoritative)
* ``postings.json``  -- BM25 postings by term, derived from the chunk file
                        and rebuilt on load
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass
from datetime import date

import numpy as np

from . import kernels
from .chunks import Chunk, read_jsonl, write_jsonl
from .errors import ConfigError, StoreError

FORMAT_VERSION = 1

MANIFEST_FILE = "manifest.json"
CHUNKS_FILE = "chunks.jsonl"
POSTINGS_FILE = "postings.json"


@dataclass(frozen=True)
class SearchHit:
    chunk_id: str
    score: float
    path: str
    rank: int  # 1-based within one search result


class ChunkStore:
    """In-memory chunk collection with lazily rebuilt search indexes."""

    def __init__(self, k1: float = 1.5, b: float = 0.75) -> None:
        if k1 <= 0:
            raise ConfigError("bad-bm25", f"k1 must be positive, got {k1}")
        if not 0.0 <= b <= 1.0:
            raise ConfigError("bad-bm25", f"b must be in [0, 1], got {b}")
        self.k1 = float(k1)
        self.b = float(b)
        self._chunks: dict[str, Chunk] = {}
        self._dim: int | None = None
        self._dirty = True

    # ------------------------------------------------------------------ basics

    def __len__(self) -> int:
        return len(self._chunks)

    def __contains__(self, chunk_id: str) -> bool:
        return chunk_id in self._chunks

    def chunk_ids(self) -> list[str]:
        return list(self._chunks)

    def all_chunks(self) -> list[Chunk]:
        return list(self._chunks.values())

    def get_chunk(self, chunk_id: str) -> Chunk:
        try:
            return self._chunks[chunk_id]
        except KeyError:
            raise StoreError("unknown-chunk", f"no chunk {chunk_id} in store", chunk_id=chunk_id)

    def get_neighbor(self, chunk_id: str, direction: str) -> Chunk | None:
        """Linked prev/next chunk, or None at a document edge or dangling link."""
        if direction not in ("prev", "next"):
            raise ConfigError("bad-direction", f"direction must be prev or next, got {direction!r}")
        chunk = self.get_chunk(chunk_id)
        target = chunk.prev_id if direction == "prev" else chunk.next_id
        if target is None:
            return None
        return self._chunks.get(target)

    # ------------------------------------------------------------------ writes

    def upsert_chunks(self, chunks: list[Chunk]) -> dict[str, int]:
        """Insert or replace chunks by id.

        A chunk whose id already exists replaces the stored one only when its
        publication_date is strictly newer (a missing date counts as oldest);
        otherwise the incoming chunk is skipped. Replacement takes the
        incoming record wholesale, links included.
        """
        counts = {"inserted": 0, "replaced": 0, "skipped": 0}
        for chunk in chunks:
            chunk.validate()
            dim = int(chunk.dense.shape[0])
            if chunk.meta_dense.shape[0] != dim:
                raise StoreError(
                    "dim-mismatch",
                    f"dense and meta_dense dims differ for {chunk.chunk_id}",
                    chunk_id=chunk.chunk_id,
                )
            if self._dim is None:
                self._dim = dim
            elif dim != self._dim:
                raise StoreError(
                    "dim-mismatch",
                    f"chunk {chunk.chunk_id} has dim {dim}, store has {self._dim}",
                    chunk_id=chunk.chunk_id,
                )
            existing = self._chunks.get(chunk.chunk_id)
            if existing is None:
                self._chunks[chunk.chunk_id] = chunk
                counts["inserted"] += 1
            elif _date_key(chunk.publication_date) > _date_key(existing.publication_date):
                self._chunks[chunk.chunk_id] = chunk
                counts["replaced"] += 1
            else:
                counts["skipped"] += 1
        self._dirty = True
        return counts

    # ------------------------------------------------------------------ index

    def _ensure_index(self) -> None:
        if not self._dirty:
            return
        ids = list(self._chunks)
        n = len(ids)
        self._ids = ids
        self._id_rank = np.zeros(n, dtype=np.int64)
        if n:
            order = sorted(range(n), key=lambda i: ids[i])
            for rank, row in enumerate(order):
                self._id_rank[row] = rank
        dim = self._dim or 1
        self._dense = np.zeros((n, dim), dtype=np.float64)
        self._meta = np.zeros((n, dim), dtype=np.float64)
        for row, chunk in enumerate(self._chunks.values()):
            self._dense[row] = chunk.dense
            self._meta[row] = chunk.meta_dense

        # Segments in first-appearance order; each segment's metadata vector
        # is read from its first chunk (shared across the segment by ingest).
        self._segment_order: list[str] = []
        self._segment_rows: dict[str, list[int]] = {}
        for row, chunk in enumerate(self._chunks.values()):
            if chunk.segment_id not in self._segment_rows:
                self._segment_order.append(chunk.segment_id)
                self._segment_rows[chunk.segment_id] = []
            self._segment_rows[chunk.segment_id].append(row)
        if self._segment_order:
            rep_rows = [self._segment_rows[sid][0] for sid in self._segment_order]
            self._segment_matrix = self._meta[rep_rows]
        else:
            self._segment_matrix = np.zeros((0, dim), dtype=np.float64)

        vocab_terms = sorted({term for chunk in self._chunks.values() for term in chunk.sparse})
        self._vocab = {term: i for i, term in enumerate(vocab_terms)}
        v = len(vocab_terms)
        postings: list[list[tuple[int, int]]] = [[] for _ in range(v)]
        self._doc_lens = np.zeros(n, dtype=np.float64)
        for row, chunk in enumerate(self._chunks.values()):
            self._doc_lens[row] = sum(chunk.sparse.values())
            for term, tf in chunk.sparse.items():
                postings[self._vocab[term]].append((row, tf))
        self._term_offsets = np.zeros(v + 1, dtype=np.int64)
        docs: list[int] = []
        tfs: list[float] = []
        self._df = np.zeros(v, dtype=np.int64)
        for term_id, plist in enumerate(postings):
            self._df[term_id] = len(plist)
            for row, tf in plist:
                docs.append(row)
                tfs.append(float(tf))
            self._term_offsets[term_id + 1] = len(docs)
        self._postings_docs = np.asarray(docs, dtype=np.int64)
        self._postings_tfs = np.asarray(tfs, dtype=np.float64)
        self._idf = np.log((n - self._df + 0.5) / (self._df + 0.5) + 1.0) if v else np.zeros(0)
        self._avgdl = float(self._doc_lens.mean()) if n and self._doc_lens.sum() > 0 else 1.0
        self._dirty = False

    def _require_nonempty(self) -> None:
        if not self._chunks:
            raise StoreError("empty-store", "store holds no chunks")

    def _top_rows(self, scores: np.ndarray, k: int) -> list[int]:
        order = np.lexsort((self._id_rank, -scores))
        return [int(row) for row in order[:k]]

    # ---------------------------------------------------------------- searches

    def dense_search(self, query_vec: np.ndarray, k: int) -> list[SearchHit]:
        """Top k chunks by cosine between unit vectors, exact and exhaustive."""
        self._require_nonempty()
        if k < 1:
            raise ConfigError("bad-k", f"k must be >= 1, got {k}")
        query = self._check_query_vec(query_vec)
        self._ensure_index()
        scores = kernels.dense_scores(self._dense, query)
        return [
            SearchHit(self._ids[row], float(scores[row]), "dense", rank)
            for rank, row in enumerate(self._top_rows(scores, k), start=1)
        ]

    def bm25_search(self, query_terms: list[str], k: int) -> list[SearchHit]:
        """Top k chunks by Okapi BM25; chunks matching no query term are omitted.

        Repeated query terms contribute once per occurrence.
        """
        self._require_nonempty()
        if k < 1:
            raise ConfigError("bad-k", f"k must be >= 1, got {k}")
        self._ensure_index()
        term_ids = np.asarray(
            [self._vocab[t] for t in query_terms if t in self._vocab], dtype=np.int64
        )
        if term_ids.size == 0:
            return []
        scores = kernels.bm25_scores(
            term_ids,
            self._term_offsets,
            self._postings_docs,
            self._postings_tfs,
            self._idf,
            self._doc_lens,
            self._avgdl,
            self.k1,
            self.b,
        )
        hits = []
        for row in self._top_rows(scores, min(k, len(self._ids))):
            if scores[row] <= 0.0:
                break
            hits.append(SearchHit(self._ids[row], float(scores[row]), "bm25", len(hits) + 1))
        return hits

    def metadata_search(self, query_vec: np.ndarray, k_meta: int) -> list[SearchHit]:
        """Chunks of the k_meta segments whose metadata vectors best match the query.

        Selected segments are ranked by score (ties by ascending segment_id);
        the result lists every chunk of each segment in position order, all
        carrying the segment's score.
        """
        self._require_nonempty()
        if k_meta < 1:
            raise ConfigError("bad-k", f"k_meta must be >= 1, got {k_meta}")
        query = self._check_query_vec(query_vec)
        self._ensure_index()
        seg_scores = self._segment_matrix @ query
        order = sorted(
            range(len(self._segment_order)),
            key=lambda i: (-seg_scores[i], self._segment_order[i]),
        )
        hits: list[SearchHit] = []
        for seg_index in order[:k_meta]:
            segment_id = self._segment_order[seg_index]
            score = float(seg_scores[seg_index])
            for row in self._segment_rows[segment_id]:
                hits.append(SearchHit(self._ids[row], score, "metadata", len(hits) + 1))
        return hits

    def _check_query_vec(self, query_vec: np.ndarray) -> np.ndarray:
        query = np.asarray(query_vec, dtype=np.float64)
        if self._dim is not None and query.shape != (self._dim,):
            raise ValueError(f"query vector must have shape ({self._dim},), got {query.shape}")
        norm = float(np.linalg.norm(query))
        if abs(norm - 1.0) > 1e-6:
            raise ValueError(f"query vector must be unit-norm, |q|={norm!r}")
        return query

    # ------------------------------------------------------------- persistence

    def manifest(self) -> dict:
        self._ensure_index()
        latest: dict[str, date | None] = {}
        for chunk in self._chunks.values():
            if chunk.document_id not in latest:
                latest[chunk.document_id] = chunk.publication_date
            else:
                current = latest[chunk.document_id]
                if _date_key(chunk.publication_date) > _date_key(current):
                    latest[chunk.document_id] = chunk.publication_date
        return {
            "format_version": FORMAT_VERSION,
            "chunk_count": len(self._chunks),
            "embedding_dim": self._dim,
            "bm25": {"k1": self.k1, "b": self.b},
            "documents": [
                {
                    "document_id": document_id,
                    "publication_date": d.isoformat() if d else None,
                }
                for document_id, d in sorted(latest.items())
            ],
        }

    def save(self, path: str) -> None:
        """Write the store directory; identical stores produce identical bytes."""
        self._ensure_index()
        os.makedirs(path, exist_ok=True)
        with open(os.path.join(path, MANIFEST_FILE), "w", encoding="utf-8") as handle:
            json.dump(self.manifest(), handle, ensure_ascii=False, indent=2)
            handle.write("\n")
        write_jsonl(self._chunks.values(), os.path.join(path, CHUNKS_FILE))
        terms = sorted(self._vocab)
        postings = {}
        for term in terms:
            term_id = self._vocab[term]
            start, end = int(self._term_offsets[term_id]), int(self._term_offsets[term_id + 1])
            postings[term] = [
                [self._ids[int(self._postings_docs[p])], int(self._postings_tfs[p])]
                for p in range(start, end)
            ]
        with open(os.path.join(path, POSTINGS_FILE), "w", encoding="utf-8") as handle:
            json.dump(postings, handle, ensure_ascii=False, indent=2)
            handle.write("\n")

    @classmethod
    def load(cls, path: str) -> "ChunkStore":
        """Load a store directory. The chunk file is authoritative; postings rebuild."""
        manifest_path = os.path.join(path, MANIFEST_FILE)
        try:
            with open(manifest_path, "r", encoding="utf-8") as handle:
                raw = handle.read()
        except OSError as exc:
            raise StoreError("missing-store", f"cannot read {manifest_path}: {exc}", path=str(path)) from exc
        if not raw.strip():
            raise StoreError("bad-store-format", f"{manifest_path} is empty", path=str(path))
        try:
            manifest = json.loads(raw)
        except json.JSONDecodeError as exc:
            raise StoreError("bad-store-format", f"{manifest_path}: invalid JSON: {exc}") from exc
        if not isinstance(manifest, dict):
            raise StoreError("bad-store-format", f"{manifest_path}: manifest must be an object")
        version = manifest.get("format_version")
        if version != FORMAT_VERSION:
            raise StoreError(
                "format-version",
                f"store format {version!r} is not supported (expected {FORMAT_VERSION})",
                found=version,
                expected=FORMAT_VERSION,
            )
        bm25 = manifest.get("bm25", {})
        store = cls(k1=float(bm25.get("k1", 1.5)), b=float(bm25.get("b", 0.75)))
        chunks = read_jsonl(os.path.join(path, CHUNKS_FILE))
        seen: set[str] = set()
        for chunk in chunks:
            if chunk.chunk_id in seen:
                raise StoreError(
                    "duplicate-chunk", f"chunk {chunk.chunk_id} appears twice", chunk_id=chunk.chunk_id
                )
            seen.add(chunk.chunk_id)
        store.upsert_chunks(chunks)
        expected = manifest.get("chunk_count")
        if expected != len(store):
            raise StoreError(
                "manifest-mismatch",
                f"manifest says {expected} chunks, file has {len(store)}",
                expected=expected,
                found=len(store),
            )
        return store


def _date_key(d: date | None) -> tuple[int, str]:
    # None sorts before any real date, so dateless chunks never win.
    return (1, d.isoformat()) if d is not None else (0, "")
