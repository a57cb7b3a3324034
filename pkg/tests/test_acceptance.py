"""Acceptance gate: one test per release criterion, stub clients only.

Each test prints a PASS line on success so a verbose run reads as a
criterion checklist. Tolerances are pinned here and nowhere looser.
"""

import contextlib
import io
import json
import math
import os
import random
import time
from datetime import date

import numpy as np
import yaml

from toycorpus import DATA_DIR, DOC_DATES, make_chunk

from finsage.cli import main
from finsage.clients import StubGenerator
from finsage.evaluation import (
    EvalQuery,
    binary_ndcg,
    evaluate_retrieval,
    normalized_recall,
    reciprocal_rank,
    set_metrics,
)
from finsage.ingest import ChunkDraft, dedup_near, resolve_coreferences
from finsage.rerank import PreferencePair, dpo_loss, final_score, rerank
from finsage.retrieval import expand_bundle, hyde_search, retrieve
from finsage.store import ChunkStore


def _passed(label: str) -> None:
    print(f"PASS  {label}")


# ------------------------------------------------------------ criterion 1


def test_criterion_metric_oracle_equivalence():
    """All ranking metrics match brute-force oracles on 1000 random instances."""
    started = time.perf_counter()
    rng = random.Random(1337)
    universe = [f"c{i:03d}" for i in range(40)]
    for _ in range(1000):
        ranked = rng.sample(universe, rng.randrange(0, 20))
        relevant = set(rng.sample(universe, rng.randrange(1, 10)))
        k = rng.randrange(1, 12)

        hits = {c for c in ranked if c in relevant}
        o_precision = len(hits) / len(ranked) if ranked else 0.0
        o_recall = len(hits) / len(relevant)
        denom = o_precision + o_recall
        o_f1 = (2 * o_precision * o_recall / denom) if denom else 0.0
        metrics = set_metrics(set(ranked), relevant)
        assert abs(metrics["precision"] - o_precision) <= 1e-9
        assert abs(metrics["recall"] - o_recall) <= 1e-9
        assert abs(metrics["f1"] - o_f1) <= 1e-9

        o_nrecall = len({c for c in ranked[:k] if c in relevant}) / min(len(relevant), k)
        assert abs(normalized_recall(ranked, relevant, k) - o_nrecall) <= 1e-9

        o_rr = 0.0
        for pos, c in enumerate(ranked, 1):
            if c in relevant:
                o_rr = 1.0 / pos
                break
        assert abs(reciprocal_rank(ranked, relevant) - o_rr) <= 1e-9

        o_dcg = sum(
            (1.0 if c in relevant else 0.0) / math.log2(i + 2) for i, c in enumerate(ranked)
        )
        o_idcg = sum(1.0 / math.log2(i + 2) for i in range(len(relevant)))
        o_ndcg = o_dcg / o_idcg if o_idcg else 0.0
        assert abs(binary_ndcg(ranked, relevant) - o_ndcg) <= 1e-9

    elapsed = time.perf_counter() - started
    assert elapsed < 5.0, f"oracle sweep took {elapsed:.2f}s"
    _passed("metric oracle equivalence (1000 instances, 1e-9)")


# ------------------------------------------------------------ criterion 2


def test_criterion_bndcg_spot_value():
    """Relevance pattern [1, 0, 1] with two annotated chunks scores ~0.91972."""
    got = binary_ndcg(["rel_a", "other", "rel_b"], {"rel_a", "rel_b"})
    expected = 1.5 / (1.0 + 1.0 / math.log2(3))
    assert abs(got - expected) <= 1e-6
    assert abs(got - 0.91972) <= 1e-5
    _passed("binary nDCG spot value 0.91972")


# ------------------------------------------------------------ criterion 3


def test_criterion_normalized_recall_cap():
    """Eight annotated, budget five, five correct: a perfect 1.0, not 5/8."""
    relevant = {f"r{i}" for i in range(8)}
    ranked = [f"r{i}" for i in range(5)]
    assert normalized_recall(ranked, relevant, k=5) == 1.0
    _passed("normalized recall caps its denominator at k")


# ------------------------------------------------------------ criterion 4


def test_criterion_dpo_loss_values():
    """Symmetric scores cost ln 2; the (0.9, 0.1) pair costs ~0.105361."""

    def const_probs(values):
        queue = list(values)
        return lambda query, texts: [queue.pop(0) for _ in texts]

    pairs = [PreferencePair(query="q", pos=["good"], neg=["bad"])]
    symmetric = dpo_loss(pairs, const_probs([0.5, 0.5]))
    assert abs(symmetric - math.log(2)) <= 1e-9

    confident = dpo_loss(pairs, const_probs([0.9, 0.1]))
    assert abs(confident - 0.105361) <= 1e-6
    _passed("preference loss: ln 2 symmetric, 0.105361 at (0.9, 0.1)")


# ------------------------------------------------------------ criterion 5


def test_criterion_recency_scoring_contract(toy_store, toy_clients, toy_config, toy_ids):
    """Zero logit with beta 0 scores 0.5; recency breaks a duplicate tie;
    shifting every logit by a constant never changes the winner."""
    assert final_score(0.0, 1.0, 0.0) == 0.5
    assert final_score(0.0, 0.0, 0.0) == 0.5

    # near-duplicate passages, one fresh and one stale, equal raw logits
    query = "deferred revenue balances commitments"
    trace = retrieve(query, [], toy_store, toy_clients, toy_config.retrieval)
    top, _ = rerank(query, trace, toy_store, toy_clients, toy_config.rerank)
    positions = {}
    for rank, unit in enumerate(top):
        for marker in ("ALPHA", "OMEGA"):
            if toy_ids[marker] in unit.member_ids:
                positions[marker] = (rank, unit)
    assert set(positions) == {"ALPHA", "OMEGA"}
    alpha_rank, alpha = positions["ALPHA"]
    omega_rank, omega = positions["OMEGA"]
    assert alpha.raw_logit == omega.raw_logit  # duplicates up to one token
    assert alpha.time_bonus > 0.0 and omega.time_bonus == 0.0
    assert toy_config.rerank.beta > 0
    assert alpha_rank < omega_rank

    rng = random.Random(99)
    for _ in range(100):
        n = rng.randrange(2, 12)
        logits = [rng.uniform(-4, 4) for _ in range(n)]
        bonuses = [rng.random() for _ in range(n)]
        beta = rng.uniform(0.0, 2.0)
        shift = rng.uniform(-10, 10)
        base = [final_score(l, b, beta) for l, b in zip(logits, bonuses)]
        moved = [final_score(l + shift, b, beta) for l, b in zip(logits, bonuses)]
        assert int(np.argmax(base)) == int(np.argmax(moved))
    _passed("scoring contract: beta-0 midpoint, recency tiebreak, shift invariance")


# ------------------------------------------------------------ criterion 6


def test_criterion_union_dominates_single_paths(toy_store, toy_clients, toy_config, toy_queries):
    """Merging the four paths never loses recall and strictly gains on at
    least one toy query."""
    queries = [
        EvalQuery(row["query_id"], row["query"], row["relevant_chunk_ids"])
        for row in toy_queries
    ]
    report = evaluate_retrieval(queries, toy_store, toy_clients, toy_config.retrieval)
    strict = 0
    for row in report["queries"]:
        best_single = max(row["path_recall"].values())
        assert row["recall"] >= best_single - 1e-12, row["query_id"]
        if row["recall"] > best_single + 1e-12:
            strict += 1
    assert strict >= 1
    _passed(f"union recall dominates every path ({strict} strict wins)")


# ------------------------------------------------------------ criterion 7


def test_criterion_bundling_chain():
    """A seven-chunk identical-embedding chain bundles to exactly five
    contiguous members, identically on every run."""
    axis = np.zeros(64)
    axis[0] = 1.0

    def build_store():
        store = ChunkStore()
        chunks = []
        for i in range(7):
            chunk = make_chunk(
                f"Chain passage number {i} for the expansion walk.",
                document_id="chain",
                segment_id="chain/s0000",
            )
            chunk.dense = axis.copy()
            chunks.append(chunk)
        for i, chunk in enumerate(chunks):
            chunk.prev_id = chunks[i - 1].chunk_id if i > 0 else None
            chunk.next_id = chunks[i + 1].chunk_id if i < 6 else None
        store.upsert_chunks(chunks)
        return store, [c.chunk_id for c in chunks]

    outcomes = []
    for _ in range(3):
        store, ids = build_store()
        bundle = expand_bundle(ids[3], store, tau_expand=0.85, bundle_limit=5)
        assert bundle.member_ids == ids[1:6]  # five contiguous, seed centered
        outcomes.append((tuple(bundle.member_ids), bundle.combined_text))
    assert len(set(outcomes)) == 1
    _passed("bundle expansion: 5 contiguous members, bit-stable")


# ------------------------------------------------------------ criterion 8


def _run_pipeline(root, queries_path):
    """One full run with root as the working directory, so the two runs are
    byte-for-byte comparable (the report embeds the effective config)."""
    os.makedirs(root, exist_ok=True)
    previous = os.getcwd()
    os.chdir(root)
    try:
        with open("config.yaml", "w") as handle:
            handle.write(
                yaml.safe_dump({"store_path": "store", "rerank": {"query_time": "2024-09-30"}})
            )
        chunk_lines = []
        for doc_id, pub_date in sorted(DOC_DATES.items()):
            out = f"{doc_id}.jsonl"
            argv = [
                "ingest", os.path.join(DATA_DIR, f"{doc_id}_content_list.json"),
                "--config", "config.yaml", "--doc-id", doc_id,
                "--pub-date", pub_date.isoformat(), "--out", out,
            ]
            with contextlib.redirect_stdout(io.StringIO()):
                assert main(argv) == 0
            chunk_lines.append(open(out).read())
        with open("chunks.jsonl", "w") as handle:
            handle.write("".join(chunk_lines))
        with contextlib.redirect_stdout(io.StringIO()):
            assert main(["index", "--config", "config.yaml", "--chunks", "chunks.jsonl"]) == 0
            assert main([
                "eval", "--config", "config.yaml", "--queries", queries_path,
                "--out", "report.json",
            ]) == 0

        def read(name):
            with open(os.path.join("store", name), "rb") as handle:
                return handle.read()

        store_bytes = {
            name: read(name) for name in ("manifest.json", "chunks.jsonl", "postings.json")
        }
        with open("report.json", "rb") as handle:
            report_bytes = handle.read()
        return store_bytes, report_bytes
    finally:
        os.chdir(previous)


def test_criterion_pipeline_determinism(tmp_path, toy_queries_path):
    """Ingest, index, eval twice: byte-identical stores and reports."""
    started = time.perf_counter()
    first = _run_pipeline(str(tmp_path / "run1"), str(toy_queries_path))
    second = _run_pipeline(str(tmp_path / "run2"), str(toy_queries_path))
    elapsed = time.perf_counter() - started
    for name in first[0]:
        assert first[0][name] == second[0][name], f"{name} differs between runs"
    assert first[1] == second[1], "eval report differs between runs"
    assert elapsed < 60.0, f"double pipeline took {elapsed:.1f}s"
    _passed(f"pipeline determinism, two runs in {elapsed:.1f}s")


# ------------------------------------------------------------ criterion 9


class _CountingCorefGenerator(StubGenerator):
    def __init__(self):
        super().__init__()
        self.context_sizes = []

    def generate_texts(self, role, prompt, n, context=None):
        if role == "coref":
            self.context_sizes.append(len(context or []))
        return super().generate_texts(role, prompt, n, context=context)


def test_criterion_preprocessing_rules():
    """Dedup is idempotent, upsert keeps the newest date for identical text,
    and the pronoun rewriter sees exactly min(i, 4) prior drafts."""

    def draft(text):
        return ChunkDraft(
            text=text, segment_id="d/s0000", document_id="d",
            page_start=1, page_end=1, publication_date=None,
        )

    drafts = [
        draft("Net revenue for the period grew eleven percent on subscription strength."),
        draft("Net revenue for the period grew eleven percent on subscription strength."),
        draft("Cash balances declined as the buyback program accelerated through June."),
        draft("Net revenue for the year grew eleven percent on subscription strength."),
    ]
    once, dropped_once = dedup_near(drafts, 0.7)
    twice, dropped_twice = dedup_near(once, 0.7)
    assert dropped_once >= 1
    assert dropped_twice == 0
    assert [d.text for d in twice] == [d.text for d in once]

    text = "Identical passage text shared across filing vintages."
    old = make_chunk(text, document_id="old", publication_date=date(2023, 1, 1))
    new = make_chunk(text, document_id="new", publication_date=date(2024, 1, 1))
    assert old.chunk_id == new.chunk_id
    for ordering in ([old, new], [new, old]):
        store = ChunkStore()
        store.upsert_chunks([ordering[0]])
        store.upsert_chunks([ordering[1]])
        kept = store.get_chunk(old.chunk_id)
        assert kept.publication_date == date(2024, 1, 1)

    pronouned = [draft(f"It reported segment figure number {i} this quarter.") for i in range(7)]
    generator = _CountingCorefGenerator()
    resolve_coreferences(pronouned, coref_k=4, generator=generator)
    assert generator.context_sizes == [min(i, 4) for i in range(7)]
    _passed("preprocessing: dedup idempotent, newest-date upsert, coref window")


# ------------------------------------------------------------ criterion 10


class _IdentityGenerator(StubGenerator):
    def generate_texts(self, role, prompt, n, context=None):
        if role == "hyde":
            return [prompt] * n
        return super().generate_texts(role, prompt, n, context=context)


def test_criterion_hyde_degenerates_to_dense(toy_store, toy_clients):
    """When hypotheses are the query itself, the hypothesis path reproduces
    dense search item for item."""
    query = "refinancing obligations timetable"
    vec = toy_clients.embedder.embed_texts([query])[0]
    dense_hits = toy_store.dense_search(vec, 8)
    hyde_hits = hyde_search(
        query, toy_store, _IdentityGenerator(), toy_clients.embedder, n_hypotheses=3, k=8
    )
    assert [(h.chunk_id, h.score) for h in hyde_hits] == [
        (h.chunk_id, h.score) for h in dense_hits
    ]
    assert [h.rank for h in hyde_hits] == list(range(1, len(dense_hits) + 1))
    assert all(h.path == "hyde" for h in hyde_hits)
    _passed("identity-hypothesis search equals dense search")
