"""Multi-path retrieval: paraphrase, four search paths, union, bundling.

For each sub-query of the paraphrased plan, four paths run against the
store: dense cosine, BM25, segment-metadata, and HyDE (hypothetical
passages embedded and dense-searched). Per-path hits are unioned by
chunk_id with provenance kept, then each candidate seeds a bundle that
absorbs linked neighbors with sufficiently similar dense vectors.

A path whose client fails is skipped and recorded; retrieval only errors
when every path of a sub-query failed.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .clients import ClientBundle, Embedder, Generator
from .errors import ClientError
from .store import ChunkStore, SearchHit
from .textutil import tokenize

PATHS = ("dense", "bm25", "metadata", "hyde")
_PATH_PRIORITY = {path: i for i, path in enumerate(PATHS)}


@dataclass
class RetrievalSettings:
    k_dense: int = 10
    k_bm25: int = 10
    k_meta: int = 3
    k_hyde: int = 10
    hyde_hypotheses: int = 3
    tau_expand: float = 0.85
    bundle_limit: int = 5
    rerank_units: str = "bundles"  # "bundles" | "chunks"


@dataclass
class QueryPlan:
    original_query: str
    sub_queries: list[str]
    history_used: bool
    degraded: bool = False  # paraphraser failed; original query used verbatim

    def to_json_dict(self) -> dict:
        return {
            "original_query": self.original_query,
            "sub_queries": list(self.sub_queries),
            "history_used": self.history_used,
            "degraded": self.degraded,
        }


@dataclass
class Candidate:
    """One distinct chunk in the union of path results."""

    chunk_id: str
    paths: list[str]  # contributing paths, in PATHS order
    best_rank: int
    best_path: str
    ranks: dict[str, int] = field(default_factory=dict)
    scores: dict[str, float] = field(default_factory=dict)

    def to_json_dict(self) -> dict:
        return {
            "chunk_id": self.chunk_id,
            "paths": list(self.paths),
            "best_rank": self.best_rank,
            "best_path": self.best_path,
            "ranks": dict(self.ranks),
            "scores": {p: self.scores[p] for p in self.ranks},
        }


@dataclass
class Bundle:
    """A candidate chunk expanded with its similar linked neighbors."""

    seed_chunk_id: str
    member_ids: list[str]  # document order
    combined_text: str

    def to_json_dict(self) -> dict:
        return {"seed_chunk_id": self.seed_chunk_id, "member_ids": list(self.member_ids)}


@dataclass
class SubQueryResult:
    sub_query: str
    hits_by_path: dict[str, list[SearchHit]]
    path_errors: dict[str, str]
    candidates: list[Candidate]
    bundles: list[Bundle]


@dataclass
class RetrievalTrace:
    plan: QueryPlan
    sub_results: list[SubQueryResult]
    settings: RetrievalSettings

    def to_json_dict(self) -> dict:
        return {
            "plan": self.plan.to_json_dict(),
            "settings": {
                "k_dense": self.settings.k_dense,
                "k_bm25": self.settings.k_bm25,
                "k_meta": self.settings.k_meta,
                "k_hyde": self.settings.k_hyde,
                "hyde_hypotheses": self.settings.hyde_hypotheses,
                "tau_expand": self.settings.tau_expand,
                "bundle_limit": self.settings.bundle_limit,
                "rerank_units": self.settings.rerank_units,
            },
            "sub_queries": [
                {
                    "sub_query": r.sub_query,
                    "paths": {
                        path: [
                            {"chunk_id": h.chunk_id, "score": h.score, "rank": h.rank}
                            for h in hits
                        ]
                        for path, hits in r.hits_by_path.items()
                    },
                    "path_errors": dict(r.path_errors),
                    "candidates": [c.to_json_dict() for c in r.candidates],
                    "bundles": [b.to_json_dict() for b in r.bundles],
                }
                for r in self.sub_results
            ],
        }


def paraphrase_query(query: str, history: list[str], generator: Generator) -> QueryPlan:
    """Rewrite a query into standalone sub-queries via the generator.

    History turns are folded into the prompt above the query so follow-up
    questions resolve their references. The generator answers with one
    sub-query per line. On failure the plan degrades to the original query.
    """
    prompt = "\n".join([*history, query]) if history else query
    try:
        raw = generator.generate_texts("paraphrase", prompt, 1)[0]
    except ClientError:
        return QueryPlan(query, [query], history_used=bool(history), degraded=True)
    sub_queries = [line.strip() for line in raw.splitlines() if line.strip()]
    if not sub_queries:
        sub_queries = [query]
    return QueryPlan(query, sub_queries, history_used=bool(history))


def hyde_search(
    sub_query: str,
    store: ChunkStore,
    generator: Generator,
    embedder: Embedder,
    n_hypotheses: int,
    k: int,
) -> list[SearchHit]:
    """Dense search through hypothetical passages.

    Each generated passage runs its own dense search; a chunk found by
    several hypotheses keeps its best score. If generation fails, the
    sub-query itself is the single hypothesis, making the path degrade to
    plain dense search.
    """
    try:
        hypotheses = generator.generate_texts("hyde", sub_query, n_hypotheses)
    except ClientError:
        hypotheses = [sub_query]
    vectors = embedder.embed_texts(hypotheses)
    best: dict[str, float] = {}
    for i in range(len(hypotheses)):
        for hit in store.dense_search(vectors[i], k):
            if hit.chunk_id not in best or hit.score > best[hit.chunk_id]:
                best[hit.chunk_id] = hit.score
    ordered = sorted(best.items(), key=lambda kv: (-kv[1], kv[0]))[:k]
    return [
        SearchHit(chunk_id, score, "hyde", rank)
        for rank, (chunk_id, score) in enumerate(ordered, start=1)
    ]


def run_paths(
    sub_query: str,
    store: ChunkStore,
    clients: ClientBundle,
    settings: RetrievalSettings,
) -> tuple[dict[str, list[SearchHit]], dict[str, str]]:
    """Run the enabled search paths for one sub-query.

    A path with K=0 is disabled. Client failures disable the affected paths
    for this sub-query and are reported in the error map; if nothing at all
    could run, the last client error propagates.
    """
    hits_by_path: dict[str, list[SearchHit]] = {}
    errors: dict[str, str] = {}

    query_vec: np.ndarray | None = None
    embed_error: ClientError | None = None
    if settings.k_dense > 0 or settings.k_meta > 0:
        try:
            query_vec = clients.embedder.embed_texts([sub_query])[0]
        except ClientError as exc:
            embed_error = exc

    if settings.k_dense > 0:
        if query_vec is not None:
            hits_by_path["dense"] = store.dense_search(query_vec, settings.k_dense)
        else:
            errors["dense"] = embed_error.message
    if settings.k_bm25 > 0:
        hits_by_path["bm25"] = store.bm25_search(tokenize(sub_query), settings.k_bm25)
    if settings.k_meta > 0:
        if query_vec is not None:
            hits_by_path["metadata"] = store.metadata_search(query_vec, settings.k_meta)
        else:
            errors["metadata"] = embed_error.message
    if settings.k_hyde > 0:
        try:
            hits_by_path["hyde"] = hyde_search(
                sub_query,
                store,
                clients.generator,
                clients.embedder,
                settings.hyde_hypotheses,
                settings.k_hyde,
            )
        except ClientError as exc:
            errors["hyde"] = exc.message

    enabled = [p for p, k in (("dense", settings.k_dense), ("bm25", settings.k_bm25),
                              ("metadata", settings.k_meta), ("hyde", settings.k_hyde)) if k > 0]
    if enabled and not hits_by_path:
        raise ClientError(
            "all-paths-failed",
            f"every retrieval path failed for sub-query {sub_query!r}",
            sub_query=sub_query,
        )
    return hits_by_path, errors


def union_candidates(hits_by_path: dict[str, list[SearchHit]]) -> list[Candidate]:
    """Merge per-path hits into distinct candidates with provenance.

    Candidates order by their best rank across paths; rank ties prefer the
    earlier path in dense > bm25 > metadata > hyde, then ascending chunk_id.
    """
    merged: dict[str, Candidate] = {}
    for path in PATHS:
        for hit in hits_by_path.get(path, []):
            candidate = merged.get(hit.chunk_id)
            if candidate is None:
                candidate = Candidate(
                    chunk_id=hit.chunk_id, paths=[], best_rank=hit.rank, best_path=path
                )
                merged[hit.chunk_id] = candidate
            candidate.paths.append(path)
            candidate.ranks[path] = hit.rank
            candidate.scores[path] = hit.score
            better = (hit.rank, _PATH_PRIORITY[path]) < (
                candidate.best_rank,
                _PATH_PRIORITY[candidate.best_path],
            )
            if better:
                candidate.best_rank = hit.rank
                candidate.best_path = path
    return sorted(
        merged.values(),
        key=lambda c: (c.best_rank, _PATH_PRIORITY[c.best_path], c.chunk_id),
    )


def expand_bundle(
    seed_chunk_id: str, store: ChunkStore, tau_expand: float, bundle_limit: int
) -> Bundle:
    """Grow a bundle from a seed chunk along prev/next links.

    Expansion alternates previous-then-next. A neighbor joins only if the
    cosine between its dense vector and the seed's reaches tau_expand; a
    rejected or missing neighbor closes that direction for good. Growth
    stops at bundle_limit members. Text joins in document order with
    newlines.
    """
    seed = store.get_chunk(seed_chunk_id)
    members = [seed]
    open_prev = True
    open_next = True
    while len(members) < bundle_limit and (open_prev or open_next):
        if open_prev:
            neighbor = store.get_neighbor(members[0].chunk_id, "prev")
            if neighbor is not None and float(np.dot(seed.dense, neighbor.dense)) >= tau_expand:
                members.insert(0, neighbor)
            else:
                open_prev = False
        if len(members) >= bundle_limit:
            break
        if open_next:
            neighbor = store.get_neighbor(members[-1].chunk_id, "next")
            if neighbor is not None and float(np.dot(seed.dense, neighbor.dense)) >= tau_expand:
                members.append(neighbor)
            else:
                open_next = False
    return Bundle(
        seed_chunk_id=seed_chunk_id,
        member_ids=[c.chunk_id for c in members],
        combined_text="\n".join(c.text for c in members),
    )


def retrieve(
    query: str,
    history: list[str],
    store: ChunkStore,
    clients: ClientBundle,
    settings: RetrievalSettings,
) -> RetrievalTrace:
    """Full retrieval for one query: plan, paths, union, bundles."""
    plan = paraphrase_query(query, history, clients.generator)
    sub_results = []
    for sub_query in plan.sub_queries:
        hits_by_path, errors = run_paths(sub_query, store, clients, settings)
        candidates = union_candidates(hits_by_path)
        bundles = [
            expand_bundle(c.chunk_id, store, settings.tau_expand, settings.bundle_limit)
            for c in candidates
        ]
        sub_results.append(
            SubQueryResult(
                sub_query=sub_query,
                hits_by_path=hits_by_path,
                path_errors=errors,
                candidates=candidates,
                bundles=bundles,
            )
        )
    return RetrievalTrace(plan=plan, sub_results=sub_results, settings=settings)
