"""Retrieval and re-ranking evaluation: metrics, overlap analysis, reports.

Set metrics treat retrieval as unordered; the ranked metrics (normalized
recall, MRR, binary nDCG) consume the ranked chunk list. The overlap
partition splits relevant retrieved chunks by which search paths found
them, summing to 100 percent.

Reports serialize with fixed key order and no timestamps, so identical
inputs produce byte-identical JSON.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass

from .clients import ClientBundle
from .errors import InputDataError
from .rerank import RerankSettings, rank_units, score_units, units_from_trace
from .retrieval import PATHS, RetrievalSettings, retrieve
from .store import ChunkStore

DEFAULT_K_VALUES = (5, 10, 15)


@dataclass
class EvalQuery:
    query_id: str
    query: str
    relevant_chunk_ids: list[str]
    reference_answer: str | None = None


def load_eval_queries(path: str) -> list[EvalQuery]:
    """Read annotated queries from JSONL; every problem names its line."""
    queries: list[EvalQuery] = []
    seen_ids: set[str] = set()
    try:
        handle = open(path, "r", encoding="utf-8")
    except OSError as exc:
        raise InputDataError("missing-file", f"cannot read {path}: {exc}") from exc
    with handle:
        for line_no, line in enumerate(handle, start=1):
            if not line.strip():
                continue
            try:
                record = json.loads(line)
            except json.JSONDecodeError as exc:
                raise InputDataError(
                    "bad-queries", f"{path}:{line_no}: invalid JSON: {exc}", line=line_no
                ) from exc
            query_id = record.get("query_id")
            query = record.get("query")
            relevant = record.get("relevant_chunk_ids")
            if not isinstance(query_id, str) or not query_id:
                raise InputDataError("bad-queries", f"{path}:{line_no}: query_id must be a string", line=line_no)
            if not isinstance(query, str) or not query:
                raise InputDataError("bad-queries", f"{path}:{line_no}: query must be a string", line=line_no)
            if (
                not isinstance(relevant, list)
                or not relevant
                or not all(isinstance(c, str) for c in relevant)
            ):
                raise InputDataError(
                    "bad-queries",
                    f"{path}:{line_no}: relevant_chunk_ids must be a non-empty list of strings",
                    line=line_no,
                )
            if query_id in seen_ids:
                raise InputDataError("bad-queries", f"{path}:{line_no}: duplicate query_id {query_id}", line=line_no)
            seen_ids.add(query_id)
            reference = record.get("reference_answer")
            if reference is not None and not isinstance(reference, str):
                raise InputDataError("bad-queries", f"{path}:{line_no}: reference_answer must be a string", line=line_no)
            queries.append(EvalQuery(query_id, query, list(relevant), reference))
    if not queries:
        raise InputDataError("bad-queries", f"{path} holds no queries")
    return queries


# ----------------------------------------------------------------- metrics


def set_metrics(retrieved: set[str], relevant: set[str]) -> dict[str, float]:
    correct = len(retrieved & relevant)
    precision = correct / len(retrieved) if retrieved else 0.0
    recall = correct / len(relevant) if relevant else 0.0
    f1 = 2 * precision * recall / (precision + recall) if precision + recall > 0 else 0.0
    return {"precision": precision, "recall": recall, "f1": f1}


def normalized_recall(ranked: list[str], relevant: set[str], k: int) -> float:
    """Recall against an attainable denominator: min(|relevant|, k).

    With more annotated chunks than the budget k, retrieving k correct ones
    scores a full 1.0.
    """
    if k < 1:
        raise ValueError("k must be >= 1")
    if not relevant:
        return 0.0
    correct = len(set(ranked[:k]) & relevant)
    return correct / min(len(relevant), k)


def reciprocal_rank(ranked: list[str], relevant: set[str]) -> float:
    for index, chunk_id in enumerate(ranked, start=1):
        if chunk_id in relevant:
            return 1.0 / index
    return 0.0


def binary_ndcg(ranked: list[str], relevant: set[str]) -> float:
    """DCG over binary gains, normalized by the all-relevant ideal prefix.

    The ideal places all |relevant| chunks first, so the denominator is the
    sum of 1/log2(i+1) for i = 1..|relevant| regardless of list length.
    """
    if not relevant:
        return 0.0
    dcg = 0.0
    for index, chunk_id in enumerate(ranked, start=1):
        if chunk_id in relevant:
            dcg += 1.0 / math.log2(index + 1)
    idcg = sum(1.0 / math.log2(i + 1) for i in range(1, len(relevant) + 1))
    return dcg / idcg


def overlap_partition(
    path_hits_per_query: list[dict[str, set[str]]],
    relevant_per_query: list[set[str]],
) -> dict[str, float]:
    """Share of relevant retrieved chunks per exact path combination.

    Each relevant chunk found by at least one path counts once, keyed by the
    full set of paths that found it ("dense+bm25" style keys). Percentages
    sum to 100 when anything was found.
    """
    counts: dict[str, int] = {}
    total = 0
    for path_hits, relevant in zip(path_hits_per_query, relevant_per_query):
        found: dict[str, list[str]] = {}
        for path in PATHS:
            for chunk_id in path_hits.get(path, set()) & relevant:
                found.setdefault(chunk_id, []).append(path)
        for chunk_id, paths in found.items():
            key = "+".join(p for p in PATHS if p in paths)
            counts[key] = counts.get(key, 0) + 1
            total += 1
    if total == 0:
        return {}
    return {key: 100.0 * counts[key] / total for key in sorted(counts)}


def _mean(values: list[float]) -> float:
    return sum(values) / len(values) if values else 0.0


# ------------------------------------------------------------------ reports


def evaluate_retrieval(
    queries: list[EvalQuery],
    store: ChunkStore,
    clients: ClientBundle,
    settings: RetrievalSettings,
) -> dict:
    """Run multi-path retrieval per query and report set metrics plus overlap.

    The union row uses all retrieved chunks (bundle members included when
    bundling is active); per-path recalls use that path's raw hits.
    """
    rows = []
    path_hits_per_query: list[dict[str, set[str]]] = []
    relevant_per_query: list[set[str]] = []
    for eval_query in queries:
        trace = retrieve(eval_query.query, [], store, clients, settings)
        relevant = set(eval_query.relevant_chunk_ids)
        path_hits: dict[str, set[str]] = {path: set() for path in PATHS}
        for sub_result in trace.sub_results:
            for path, hits in sub_result.hits_by_path.items():
                path_hits[path].update(h.chunk_id for h in hits)
        retrieved: set[str] = set()
        for sub_result in trace.sub_results:
            if settings.rerank_units == "bundles":
                for bundle in sub_result.bundles:
                    retrieved.update(bundle.member_ids)
            else:
                retrieved.update(c.chunk_id for c in sub_result.candidates)
        metrics = set_metrics(retrieved, relevant)
        path_recall = {
            path: (len(path_hits[path] & relevant) / len(relevant)) for path in PATHS
        }
        rows.append(
            {
                "query_id": eval_query.query_id,
                "sub_queries": list(trace.plan.sub_queries),
                "num_retrieved": len(retrieved),
                "precision": metrics["precision"],
                "recall": metrics["recall"],
                "f1": metrics["f1"],
                "path_recall": path_recall,
            }
        )
        path_hits_per_query.append(path_hits)
        relevant_per_query.append(relevant)
    aggregates = {
        "precision": _mean([r["precision"] for r in rows]),
        "recall": _mean([r["recall"] for r in rows]),
        "f1": _mean([r["f1"] for r in rows]),
        "avg_num_retrieved": _mean([float(r["num_retrieved"]) for r in rows]),
        "path_recall": {
            path: _mean([r["path_recall"][path] for r in rows]) for path in PATHS
        },
    }
    return {
        "mode": "retrieval",
        "num_queries": len(queries),
        "queries": rows,
        "aggregates": aggregates,
        "overlap": overlap_partition(path_hits_per_query, relevant_per_query),
    }


def evaluate_rerank(
    queries: list[EvalQuery],
    store: ChunkStore,
    clients: ClientBundle,
    retrieval_settings: RetrievalSettings,
    rerank_settings: RerankSettings,
    k_values: tuple[int, ...] = DEFAULT_K_VALUES,
) -> dict:
    """Retrieve, score the pooled units once per query, report metrics at each K.

    The ranked chunk list flattens the top-K units in order (members in
    document order, first occurrence wins); precision counts the flattened
    chunks while normalized recall divides by min(|relevant|, K).
    """
    query_time = rerank_settings.resolve_query_time()
    rows = []
    for eval_query in queries:
        trace = retrieve(eval_query.query, [], store, clients, retrieval_settings)
        units = units_from_trace(trace, store, retrieval_settings.rerank_units)
        scored, _notes = score_units(
            eval_query.query, units, clients.scorer, rerank_settings.beta, query_time
        )
        ranked_units = rank_units(scored)
        relevant = set(eval_query.relevant_chunk_ids)
        per_k = {}
        for k in k_values:
            ranked_chunks: list[str] = []
            seen: set[str] = set()
            for unit in ranked_units[:k]:
                for member in unit.member_ids:
                    if member not in seen:
                        seen.add(member)
                        ranked_chunks.append(member)
            metrics = set_metrics(set(ranked_chunks), relevant)
            correct = len(set(ranked_chunks) & relevant)
            per_k[str(k)] = {
                "precision": metrics["precision"],
                # K budgets units, so the denominator caps at K even when
                # flattened bundles yield more than K chunks.
                "normalized_recall": correct / min(len(relevant), k),
                "mrr": reciprocal_rank(ranked_chunks, relevant),
                "bndcg": binary_ndcg(ranked_chunks, relevant),
            }
        rows.append({"query_id": eval_query.query_id, "per_k": per_k})
    aggregates = {
        str(k): {
            metric: _mean([row["per_k"][str(k)][metric] for row in rows])
            for metric in ("precision", "normalized_recall", "mrr", "bndcg")
        }
        for k in k_values
    }
    return {
        "mode": "rerank",
        "num_queries": len(queries),
        "k_values": [int(k) for k in k_values],
        "queries": rows,
        "aggregates": aggregates,
    }


def emit_judge_requests(records: list[dict], path: str) -> int:
    """Write judge-ready JSONL for answered queries; status and feedback stay null.

    Each input record needs question, answer, reference, and context fields;
    records with empty answers are skipped.
    """
    count = 0
    with open(path, "w", encoding="utf-8") as handle:
        for index, record in enumerate(records):
            missing = [k for k in ("question", "answer", "reference", "context") if k not in record]
            if missing:
                raise InputDataError(
                    "bad-judge-record",
                    f"record {index} missing fields: {', '.join(missing)}",
                    record=index,
                )
            if not str(record["answer"]).strip():
                continue
            handle.write(
                json.dumps(
                    {
                        "question": record["question"],
                        "answer": record["answer"],
                        "reference": record["reference"],
                        "context": record["context"],
                        "status": None,
                        "feedback": None,
                    },
                    ensure_ascii=False,
                )
                + "\n"
            )
            count += 1
    return count


def report_to_json(report: dict) -> str:
    return json.dumps(report, ensure_ascii=False, indent=2) + "\n"
