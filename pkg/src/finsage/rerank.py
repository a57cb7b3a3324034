"""Cross-encoder re-ranking with recency bias, DPO loss, and preference data.

Final relevance of a candidate is sigmoid(raw_logit + beta * bonus), where
the raw logit comes from the cross-encoder and the bonus rewards recent
publication dates with a linear one-year decay. Because sigmoid is strictly
monotone, adding a constant to every logit never changes the ranking.
"""

from __future__ import annotations

import json
import math
import random
from dataclasses import dataclass
from datetime import date

from .clients import ClientBundle, Scorer
from .errors import ClientError, ConfigError, InputDataError
from .retrieval import RetrievalTrace
from .store import ChunkStore


@dataclass
class RerankSettings:
    k: int = 5
    beta: float = 0.1
    query_time: date | None = None  # None resolves to today at call time

    def resolve_query_time(self) -> date:
        return self.query_time if self.query_time is not None else date.today()


@dataclass
class RerankUnit:
    """What gets scored: a bundle or a bare chunk, plus its provenance."""

    unit_id: str  # seed chunk id
    member_ids: list[str]
    text: str
    publication_date: date | None
    paths: list[str]


@dataclass
class ScoredUnit:
    unit_id: str
    member_ids: list[str]
    text: str
    raw_logit: float
    time_bonus: float
    final_score: float
    paths: list[str]

    def to_json_dict(self) -> dict:
        return {
            "unit_id": self.unit_id,
            "member_ids": list(self.member_ids),
            "raw_logit": self.raw_logit,
            "time_bonus": self.time_bonus,
            "final_score": self.final_score,
            "paths": list(self.paths),
            "text": self.text,
        }


def time_bonus(publication_date: date | None, query_time: date) -> float:
    """Recency bonus in [0, 1]: 1 at the query date, 0 beyond a year.

    Missing dates earn no bonus; future-dated chunks clamp to the maximum.
    """
    if publication_date is None:
        return 0.0
    delta_days = max(0, (query_time - publication_date).days)
    return max(0.0, 1.0 - delta_days / 365.0)


def sigmoid(x: float) -> float:
    if x >= 0:
        return 1.0 / (1.0 + math.exp(-x))
    z = math.exp(x)
    return z / (1.0 + z)


def final_score(raw_logit: float, bonus: float, beta: float) -> float:
    return sigmoid(raw_logit + beta * bonus)


def units_from_trace(
    trace: RetrievalTrace, store: ChunkStore, rerank_units: str
) -> list[RerankUnit]:
    """Pool candidates of all sub-queries into distinct scorable units.

    With ``rerank_units="bundles"`` each candidate's bundle is the unit and
    its text is the combined text; with ``"chunks"`` the bare candidate chunk
    is. The first sub-query reaching a unit fixes its position; provenance
    paths merge across sub-queries.
    """
    if rerank_units not in ("bundles", "chunks"):
        raise ConfigError("bad-rerank-units", f"rerank_units must be bundles or chunks, got {rerank_units!r}")
    units: dict[str, RerankUnit] = {}
    for sub_result in trace.sub_results:
        bundles_by_seed = {b.seed_chunk_id: b for b in sub_result.bundles}
        for candidate in sub_result.candidates:
            existing = units.get(candidate.chunk_id)
            if existing is not None:
                for path in candidate.paths:
                    if path not in existing.paths:
                        existing.paths.append(path)
                continue
            chunk = store.get_chunk(candidate.chunk_id)
            if rerank_units == "bundles":
                bundle = bundles_by_seed[candidate.chunk_id]
                member_ids = list(bundle.member_ids)
                text = bundle.combined_text
            else:
                member_ids = [candidate.chunk_id]
                text = chunk.text
            units[candidate.chunk_id] = RerankUnit(
                unit_id=candidate.chunk_id,
                member_ids=member_ids,
                text=text,
                publication_date=chunk.publication_date,
                paths=list(candidate.paths),
            )
    return list(units.values())


def score_units(
    query: str,
    units: list[RerankUnit],
    scorer: Scorer,
    beta: float,
    query_time: date,
) -> tuple[list[ScoredUnit], list[str]]:
    """Score every unit against the query.

    Scoring runs as one batch; if the batch fails, units are retried one by
    one and only the failing ones are dropped, each leaving a note.
    """
    notes: list[str] = []
    texts = [u.text for u in units]
    logits: list[float | None]
    try:
        logits = list(scorer.cross_score(query, texts))
    except ClientError:
        logits = []
        for unit in units:
            try:
                logits.append(scorer.cross_score(query, [unit.text])[0])
            except ClientError as exc:
                logits.append(None)
                notes.append(f"scorer failed for {unit.unit_id}: {exc.message}")
    scored = []
    for unit, logit in zip(units, logits):
        if logit is None:
            continue
        bonus = time_bonus(unit.publication_date, query_time)
        scored.append(
            ScoredUnit(
                unit_id=unit.unit_id,
                member_ids=unit.member_ids,
                text=unit.text,
                raw_logit=float(logit),
                time_bonus=bonus,
                final_score=final_score(float(logit), bonus, beta),
                paths=unit.paths,
            )
        )
    return scored, notes


def rank_units(scored: list[ScoredUnit]) -> list[ScoredUnit]:
    """Order by final score, breaking exact ties by ascending unit id."""
    return sorted(scored, key=lambda u: (-u.final_score, u.unit_id))


def rerank(
    query: str,
    trace: RetrievalTrace,
    store: ChunkStore,
    clients: ClientBundle,
    settings: RerankSettings,
) -> tuple[list[ScoredUnit], list[str]]:
    """Score the trace's pooled units against the original query; top-K."""
    if settings.k < 1:
        raise ConfigError("bad-k", f"rerank K must be >= 1, got {settings.k}")
    units = units_from_trace(trace, store, trace.settings.rerank_units)
    scored, notes = score_units(
        query, units, clients.scorer, settings.beta, settings.resolve_query_time()
    )
    return rank_units(scored)[: settings.k], notes


# --------------------------------------------------------------- DPO training


@dataclass
class PreferencePair:
    query: str
    pos: list[str]  # exactly one positive passage
    neg: list[str]  # one or more negatives
    pos_scores: list[float] | None = None
    neg_scores: list[float] | None = None
    prompt: str | None = None

    def to_json_dict(self) -> dict:
        record: dict = {"query": self.query, "pos": list(self.pos), "neg": list(self.neg)}
        if self.pos_scores is not None:
            record["pos_scores"] = list(self.pos_scores)
        if self.neg_scores is not None:
            record["neg_scores"] = list(self.neg_scores)
        if self.prompt is not None:
            record["prompt"] = self.prompt
        return record


def dpo_loss(pairs: list[PreferencePair], probability_fn) -> float:
    """Mean preference loss over all (positive, negative) combinations.

    ``probability_fn(query, texts)`` returns relevance probabilities in the
    open interval (0, 1). Each negative of a pair contributes its own term
    -log(K(pos) / (K(pos) + K(neg))). Swapping a pair's positive and negative
    maps a term's loss L to -log(1 - exp(-L)).
    """
    if not pairs:
        raise ValueError("dpo_loss needs at least one pair")
    terms = []
    for index, pair in enumerate(pairs):
        if not pair.pos or not pair.neg:
            raise ValueError(f"pair {index} must have at least one positive and one negative")
        k_pos = probability_fn(pair.query, pair.pos)
        k_neg = probability_fn(pair.query, pair.neg)
        for score in list(k_pos) + list(k_neg):
            if not 0.0 < score < 1.0:
                raise ValueError(f"pair {index}: score {score!r} outside (0, 1)")
        for kp in k_pos:
            for kn in k_neg:
                terms.append(-math.log(kp / (kp + kn)))
    return sum(terms) / len(terms)


def build_preference_dataset(
    eval_queries,
    traces: dict[str, RetrievalTrace],
    store: ChunkStore,
    negatives_per_positive: int = 4,
    seed: int = 0,
) -> tuple[list[PreferencePair], list[str]]:
    """Mine preference pairs from retrieval traces.

    One pair per (query, annotated-relevant chunk); negatives are sampled
    from the same query's retrieved-but-not-relevant chunks (sorted, then
    seeded sampling, so reruns are byte-identical). Queries or positives
    without usable material are skipped with a note.
    """
    if negatives_per_positive < 1:
        raise ConfigError("bad-ratio", "negatives_per_positive must be >= 1")
    rng = random.Random(seed)
    pairs: list[PreferencePair] = []
    notes: list[str] = []
    for eval_query in eval_queries:
        trace = traces.get(eval_query.query_id)
        if trace is None:
            notes.append(f"no trace for query {eval_query.query_id}; skipped")
            continue
        retrieved: list[str] = []
        seen = set()
        for sub_result in trace.sub_results:
            for candidate in sub_result.candidates:
                if candidate.chunk_id not in seen:
                    seen.add(candidate.chunk_id)
                    retrieved.append(candidate.chunk_id)
        relevant = set(eval_query.relevant_chunk_ids)
        negative_pool = sorted(cid for cid in retrieved if cid not in relevant and cid in store)
        for rel_id in sorted(relevant):
            if rel_id not in store:
                notes.append(f"relevant chunk {rel_id} of {eval_query.query_id} not in store; skipped")
                continue
            if not negative_pool:
                notes.append(f"no negatives for {eval_query.query_id}/{rel_id}; skipped")
                continue
            if len(negative_pool) <= negatives_per_positive:
                chosen = list(negative_pool)
            else:
                chosen = rng.sample(negative_pool, negatives_per_positive)
            pairs.append(
                PreferencePair(
                    query=eval_query.query,
                    pos=[store.get_chunk(rel_id).text],
                    neg=[store.get_chunk(cid).text for cid in chosen],
                )
            )
    return pairs, notes


def write_preference_jsonl(pairs: list[PreferencePair], path: str) -> int:
    with open(path, "w", encoding="utf-8") as handle:
        for pair in pairs:
            handle.write(json.dumps(pair.to_json_dict(), ensure_ascii=False) + "\n")
    return len(pairs)


def load_preference_jsonl(path: str) -> list[PreferencePair]:
    pairs = []
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
                    "bad-prefs", f"{path}:{line_no}: invalid JSON: {exc}", line=line_no
                ) from exc
            query = record.get("query")
            pos = record.get("pos")
            neg = record.get("neg")
            if (
                not isinstance(query, str)
                or not isinstance(pos, list)
                or not isinstance(neg, list)
                or not pos
                or not neg
                or not all(isinstance(t, str) for t in pos + neg)
            ):
                raise InputDataError(
                    "bad-prefs",
                    f"{path}:{line_no}: each record needs query, non-empty pos and neg lists",
                    line=line_no,
                )
            pairs.append(
                PreferencePair(
                    query=query,
                    pos=pos,
                    neg=neg,
                    pos_scores=record.get("pos_scores"),
                    neg_scores=record.get("neg_scores"),
                    prompt=record.get("prompt"),
                )
            )
    return pairs
