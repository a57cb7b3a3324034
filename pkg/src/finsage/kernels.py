"""Hot scoring kernels with two interchangeable backends.

The dense cosine scan and the BM25 accumulation dominate query latency, so
both exist twice: a numba ``@njit`` version and a pure-numpy fallback. The
backend is chosen once at import time from the ``FINSAGE_KERNELS`` env var
("numba" or "numpy"); the default is numba when it imports, numpy otherwise.
Both backends accumulate in the same order, so scores match bit for bit.

BM25 postings arrive in CSR-like arrays: for vocabulary term t, the slice
``term_offsets[t]:term_offsets[t+1]`` of ``postings_docs``/``postings_tfs``
lists the documents containing t and the term frequencies.
"""

from __future__ import annotations

import os

import numpy as np


def _dense_scores_numpy(matrix: np.ndarray, query: np.ndarray) -> np.ndarray:
    return matrix @ query


def _bm25_scores_numpy(
    query_term_ids: np.ndarray,
    term_offsets: np.ndarray,
    postings_docs: np.ndarray,
    postings_tfs: np.ndarray,
    idf: np.ndarray,
    doc_lens: np.ndarray,
    avgdl: float,
    k1: float,
    b: float,
) -> np.ndarray:
    scores = np.zeros(doc_lens.shape[0], dtype=np.float64)
    length_norm = k1 * (1.0 - b + b * doc_lens / avgdl)
    for term_id in query_term_ids:
        start, end = term_offsets[term_id], term_offsets[term_id + 1]
        docs = postings_docs[start:end]
        tfs = postings_tfs[start:end]
        scores[docs] += idf[term_id] * tfs * (k1 + 1.0) / (tfs + length_norm[docs])
    return scores


try:  # pragma: no cover - import guard
    from numba import njit

    _HAVE_NUMBA = True
except ImportError:  # pragma: no cover
    njit = None
    _HAVE_NUMBA = False


if _HAVE_NUMBA:

    @njit(cache=True)
    def _dense_scores_numba(matrix, query):  # pragma: no cover - compiled
        n, dim = matrix.shape
        scores = np.zeros(n, dtype=np.float64)
        for i in range(n):
            acc = 0.0
            for j in range(dim):
                acc += matrix[i, j] * query[j]
            scores[i] = acc
        return scores

    @njit(cache=True)
    def _bm25_scores_numba(
        query_term_ids,
        term_offsets,
        postings_docs,
        postings_tfs,
        idf,
        doc_lens,
        avgdl,
        k1,
        b,
    ):  # pragma: no cover - compiled
        scores = np.zeros(doc_lens.shape[0], dtype=np.float64)
        for qi in range(query_term_ids.shape[0]):
            term_id = query_term_ids[qi]
            weight = idf[term_id]
            for p in range(term_offsets[term_id], term_offsets[term_id + 1]):
                doc = postings_docs[p]
                tf = postings_tfs[p]
                norm = k1 * (1.0 - b + b * doc_lens[doc] / avgdl)
                scores[doc] += weight * tf * (k1 + 1.0) / (tf + norm)
        return scores


def _resolve_backend() -> str:
    requested = os.environ.get("FINSAGE_KERNELS", "").strip().lower()
    if requested == "numpy":
        return "numpy"
    if requested == "numba":
        if not _HAVE_NUMBA:
            raise ImportError("FINSAGE_KERNELS=numba but numba is not importable")
        return "numba"
    if requested:
        raise ValueError(f"FINSAGE_KERNELS must be 'numba' or 'numpy', got {requested!r}")
    return "numba" if _HAVE_NUMBA else "numpy"


_BACKEND = _resolve_backend()

if _BACKEND == "numba":
    dense_scores = _dense_scores_numba
    bm25_scores = _bm25_scores_numba
else:
    dense_scores = _dense_scores_numpy
    bm25_scores = _bm25_scores_numpy


def backend_name() -> str:
    return _BACKEND


def get_backends() -> dict[str, tuple]:
    """All importable backends, keyed by name. Used by tests and benchmarks."""
    table = {"numpy": (_dense_scores_numpy, _bm25_scores_numpy)}
    if _HAVE_NUMBA:
        table["numba"] = (_dense_scores_numba, _bm25_scores_numba)
    return table
