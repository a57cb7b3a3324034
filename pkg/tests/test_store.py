"""Chunk store: upsert rules, the three searches, and persistence."""

import json
import math
import os
import random

import numpy as np
import pytest

from finsage.chunks import chunk_id_for
from finsage.errors import ConfigError, StoreError
from finsage.store import ChunkStore
from toycorpus import make_chunk

from datetime import date


def _store(chunks, k1=1.5, b=0.75):
    store = ChunkStore(k1=k1, b=b)
    store.upsert_chunks(chunks)
    return store


# ---------------------------------------------------------------- upsert


def test_upsert_insert_replace_skip_by_date():
    old = make_chunk("Annual recurring revenue reached a record level.", publication_date=date(2023, 5, 10), document_id="a23")
    newer = make_chunk("Annual recurring revenue reached a record level.", publication_date=date(2024, 5, 15), document_id="a24")
    assert old.chunk_id == newer.chunk_id

    store = ChunkStore()
    counts = store.upsert_chunks([old])
    assert counts == {"inserted": 1, "replaced": 0, "skipped": 0}

    counts = store.upsert_chunks([newer])
    assert counts == {"inserted": 0, "replaced": 1, "skipped": 0}
    assert store.get_chunk(old.chunk_id).document_id == "a24"

    # same date and older date both skip
    counts = store.upsert_chunks([newer])
    assert counts == {"inserted": 0, "replaced": 0, "skipped": 1}
    counts = store.upsert_chunks([old])
    assert counts == {"inserted": 0, "replaced": 0, "skipped": 1}
    assert store.get_chunk(old.chunk_id).document_id == "a24"


def test_upsert_missing_date_counts_as_oldest():
    dated = make_chunk("same text twice", publication_date=date(2020, 1, 1), document_id="dated")
    undated = make_chunk("same text twice", publication_date=None, document_id="undated")

    store = ChunkStore()
    store.upsert_chunks([undated])
    counts = store.upsert_chunks([dated])
    assert counts["replaced"] == 1

    store = ChunkStore()
    store.upsert_chunks([dated])
    counts = store.upsert_chunks([undated])
    assert counts["skipped"] == 1
    assert store.get_chunk(dated.chunk_id).document_id == "dated"


def test_upsert_rejects_mismatched_dims():
    good = make_chunk("plain text")
    bad = make_chunk("other text")
    bad.dense = np.zeros(8)
    bad.dense[0] = 1.0
    store = ChunkStore()
    with pytest.raises(StoreError) as exc_info:
        store.upsert_chunks([bad])
    assert exc_info.value.code == "dim-mismatch"

    store.upsert_chunks([good])
    short = make_chunk("short vector chunk")
    short.dense = np.zeros(8)
    short.dense[0] = 1.0
    short.meta_dense = short.dense
    with pytest.raises(StoreError):
        store.upsert_chunks([short])


def test_upsert_validates_chunks():
    chunk = make_chunk("valid text")
    chunk.chunk_id = "0" * 64  # no longer the text hash
    with pytest.raises(StoreError) as exc_info:
        ChunkStore().upsert_chunks([chunk])
    assert exc_info.value.code == "chunk-id-mismatch"


def test_get_chunk_and_neighbors():
    a = make_chunk("first piece of text")
    b = make_chunk("second piece of text", prev_id=a.chunk_id)
    a.next_id = b.chunk_id
    b.next_id = "f" * 64  # dangling link
    store = _store([a, b])
    assert store.get_neighbor(a.chunk_id, "next").chunk_id == b.chunk_id
    assert store.get_neighbor(a.chunk_id, "prev") is None
    assert store.get_neighbor(b.chunk_id, "next") is None  # dangling resolves to None
    with pytest.raises(StoreError):
        store.get_chunk("not-a-chunk")


# ---------------------------------------------------------------- dense


def test_dense_search_matches_brute_force():
    rng = random.Random(31)
    words = ["alpha", "beta", "gamma", "delta", "epsilon", "zeta", "eta", "theta"]
    texts = set()
    while len(texts) < 50:
        texts.add(" ".join(rng.choice(words) for _ in range(rng.randrange(2, 9))))
    chunks = [make_chunk(t) for t in sorted(texts)]
    store = _store(chunks)

    query = chunks[7].dense
    k = 10
    hits = store.dense_search(query, k=k)
    assert [h.rank for h in hits] == list(range(1, k + 1))

    oracle = {c.chunk_id: float(np.dot(c.dense, query)) for c in chunks}
    for hit in hits:
        assert hit.score == pytest.approx(oracle[hit.chunk_id], abs=1e-12)

    # ordering must match the oracle; scores equal within float noise are
    # one block whose internal order the accumulation order may pick
    scored = sorted(oracle.items(), key=lambda kv: (-kv[1], kv[0]))
    hit_ids = [h.chunk_id for h in hits]
    pos = block_start = 0
    while pos < k:
        block_end = block_start
        while block_end < len(scored) and scored[block_end][1] >= scored[block_start][1] - 1e-9:
            block_end += 1
        block = {cid for cid, _ in scored[block_start:block_end]}
        take = min(block_end, k) - pos
        assert set(hit_ids[pos : pos + take]) <= block
        pos += take
        block_start = block_end


def test_dense_search_breaks_score_ties_by_chunk_id():
    # "abab" and "baba" share the same trigram bag, so their embeddings match
    a = make_chunk("abab")
    b = make_chunk("baba")
    assert np.array_equal(a.dense, b.dense)
    store = _store([a, b, make_chunk("unrelated words here")])
    hits = store.dense_search(a.dense, k=2)
    assert [h.chunk_id for h in hits] == sorted([a.chunk_id, b.chunk_id])
    assert hits[0].score == hits[1].score


def test_dense_search_argument_checks():
    store = _store([make_chunk("some text")])
    with pytest.raises(ConfigError):
        store.dense_search(store.all_chunks()[0].dense, k=0)
    with pytest.raises(ValueError):
        store.dense_search(np.zeros(64), k=1)  # zero norm
    with pytest.raises(ValueError):
        store.dense_search(np.ones(3) / math.sqrt(3), k=1)  # wrong shape


def test_searches_fail_on_empty_store():
    store = ChunkStore()
    q = np.zeros(64)
    q[0] = 1.0
    with pytest.raises(StoreError) as exc_info:
        store.dense_search(q, k=1)
    assert exc_info.value.code == "empty-store"
    with pytest.raises(StoreError):
        store.bm25_search(["term"], k=1)
    with pytest.raises(StoreError):
        store.metadata_search(q, k_meta=1)


# ---------------------------------------------------------------- bm25


@pytest.fixture
def fruit_store():
    docs = [
        "apple banana apple",
        "apple cherry",
        "banana banana cherry cherry",
    ]
    return _store([make_chunk(t) for t in docs]), [chunk_id_for(t) for t in docs]


def test_bm25_idf_and_scores_frozen(fruit_store):
    store, ids = fruit_store
    k1, b = 1.5, 0.75
    n, avgdl = 3, 3.0

    idf_apple = math.log((n - 2 + 0.5) / (2 + 0.5) + 1)
    assert idf_apple == 0.47000362924573563  # ln(1.6)

    def norm(dl):
        return k1 * (1 - b + b * dl / avgdl)

    def score(tf, dl):
        return idf_apple * tf * (k1 + 1) / (tf + norm(dl))

    hits = store.bm25_search(["apple"], k=5)
    by_id = {h.chunk_id: h.score for h in hits}
    assert set(by_id) == {ids[0], ids[1]}  # the banana/cherry doc is omitted
    assert by_id[ids[0]] == pytest.approx(score(2, 3), abs=1e-12)
    assert by_id[ids[1]] == pytest.approx(score(1, 2), abs=1e-12)
    assert hits[0].chunk_id == ids[0]  # tf 2 beats tf 1 here


def test_bm25_repeated_query_terms_double(fruit_store):
    store, ids = fruit_store
    once = {h.chunk_id: h.score for h in store.bm25_search(["apple"], k=5)}
    twice = {h.chunk_id: h.score for h in store.bm25_search(["apple", "apple"], k=5)}
    for cid, s in once.items():
        assert twice[cid] == pytest.approx(2 * s, abs=1e-12)


def test_bm25_unknown_terms_give_empty_result(fruit_store):
    store, _ = fruit_store
    assert store.bm25_search(["kumquat"], k=5) == []
    assert store.bm25_search([], k=5) == []


def test_bm25_mixed_known_unknown_terms(fruit_store):
    store, ids = fruit_store
    only = store.bm25_search(["cherry"], k=5)
    mixed = store.bm25_search(["cherry", "kumquat"], k=5)
    assert [(h.chunk_id, h.score) for h in mixed] == [(h.chunk_id, h.score) for h in only]


def test_bm25_score_ties_break_by_chunk_id():
    # two docs with identical term statistics, plus one filler to vary idf
    docs = ["apple pear", "pear apple", "plum plum plum"]
    chunks = [make_chunk(t) for t in docs]
    store = _store(chunks)
    hits = store.bm25_search(["apple"], k=3)
    assert len(hits) == 2
    assert hits[0].score == hits[1].score
    assert [h.chunk_id for h in hits] == sorted([chunks[0].chunk_id, chunks[1].chunk_id])


def test_bm25_k_caps_results(fruit_store):
    store, _ = fruit_store
    assert len(store.bm25_search(["cherry"], k=1)) == 1


# ---------------------------------------------------------------- metadata


def test_metadata_search_returns_whole_segments():
    seg_a = [
        make_chunk("first of segment a", title="Dividend Policy", segment_id="doc/s0000"),
        make_chunk("second of segment a", title="Dividend Policy", segment_id="doc/s0000"),
    ]
    seg_b = [make_chunk("only of segment b", title="Litigation", segment_id="doc/s0001")]
    store = _store(seg_a + seg_b)

    query = seg_a[0].meta_dense
    hits = store.metadata_search(query, k_meta=1)
    assert [h.chunk_id for h in hits] == [seg_a[0].chunk_id, seg_a[1].chunk_id]
    assert hits[0].score == hits[1].score == pytest.approx(1.0, abs=1e-12)
    assert [h.rank for h in hits] == [1, 2]

    hits = store.metadata_search(query, k_meta=2)
    assert [h.chunk_id for h in hits] == [
        seg_a[0].chunk_id,
        seg_a[1].chunk_id,
        seg_b[0].chunk_id,
    ]
    assert hits[2].score < hits[0].score


def test_metadata_search_ties_break_by_segment_id():
    # identical titles -> identical metadata vectors -> tied segment scores
    one = make_chunk("text one", title="Same Title", segment_id="doc/s0001")
    two = make_chunk("text two", title="Same Title", segment_id="doc/s0000")
    store = _store([one, two])
    hits = store.metadata_search(one.meta_dense, k_meta=2)
    assert [h.chunk_id for h in hits] == [two.chunk_id, one.chunk_id]  # s0000 first


def test_metadata_search_argument_checks():
    store = _store([make_chunk("anything")])
    with pytest.raises(ConfigError):
        store.metadata_search(store.all_chunks()[0].meta_dense, k_meta=0)


# ---------------------------------------------------------------- persistence


def test_save_load_round_trip_is_byte_identical(toy_store, toy_store_dir, tmp_path):
    loaded = ChunkStore.load(toy_store_dir)
    assert len(loaded) == len(toy_store)

    second = tmp_path / "second"
    loaded.save(str(second))
    for name in ("manifest.json", "chunks.jsonl", "postings.json"):
        original = open(os.path.join(toy_store_dir, name), "rb").read()
        again = open(second / name, "rb").read()
        assert original == again, f"{name} differs after a load/save cycle"


def test_save_load_preserves_search_results(toy_store, toy_store_dir):
    loaded = ChunkStore.load(toy_store_dir)
    probe = toy_store.all_chunks()[0]
    for store in (toy_store, loaded):
        store_hits = store.dense_search(probe.dense, k=5)
        assert store_hits == loaded.dense_search(probe.dense, k=5)
    assert toy_store.bm25_search(["revenue"], k=5) == loaded.bm25_search(["revenue"], k=5)


def test_manifest_contents(toy_store):
    manifest = toy_store.manifest()
    assert manifest["format_version"] == 1
    assert manifest["chunk_count"] == len(toy_store)
    assert manifest["embedding_dim"] == 64
    assert manifest["bm25"] == {"k1": 1.5, "b": 0.75}
    docs = {d["document_id"]: d["publication_date"] for d in manifest["documents"]}
    assert docs == {
        "acme_2024": "2024-05-15",
        "acme_2023": "2023-05-10",
        "bolt_2024": "2024-07-01",
    }


def test_load_rebuilds_postings(tmp_path):
    store = _store([make_chunk("apple banana"), make_chunk("banana cherry")])
    path = str(tmp_path / "store")
    store.save(path)
    # postings are derived; a corrupt file must not affect loading
    with open(os.path.join(path, "postings.json"), "w") as fh:
        fh.write("{ not json")
    loaded = ChunkStore.load(path)
    assert len(loaded.bm25_search(["banana"], k=5)) == 2


def test_load_missing_directory(tmp_path):
    with pytest.raises(StoreError) as exc_info:
        ChunkStore.load(str(tmp_path / "nope"))
    assert exc_info.value.code == "missing-store"


def test_load_rejects_bad_manifest(tmp_path):
    path = tmp_path / "store"
    path.mkdir()
    (path / "manifest.json").write_text("")
    with pytest.raises(StoreError) as exc_info:
        ChunkStore.load(str(path))
    assert exc_info.value.code == "bad-store-format"

    (path / "manifest.json").write_text("[1, 2]")
    with pytest.raises(StoreError):
        ChunkStore.load(str(path))


def test_load_rejects_unknown_format_version(tmp_path):
    store = _store([make_chunk("some text")])
    path = str(tmp_path / "store")
    store.save(path)
    manifest = json.load(open(os.path.join(path, "manifest.json")))
    manifest["format_version"] = 99
    json.dump(manifest, open(os.path.join(path, "manifest.json"), "w"))
    with pytest.raises(StoreError) as exc_info:
        ChunkStore.load(path)
    assert exc_info.value.code == "format-version"


def test_load_rejects_chunk_count_mismatch(tmp_path):
    store = _store([make_chunk("some text"), make_chunk("other text")])
    path = str(tmp_path / "store")
    store.save(path)
    manifest = json.load(open(os.path.join(path, "manifest.json")))
    manifest["chunk_count"] = 5
    json.dump(manifest, open(os.path.join(path, "manifest.json"), "w"))
    with pytest.raises(StoreError) as exc_info:
        ChunkStore.load(path)
    assert exc_info.value.code == "manifest-mismatch"


def test_load_rejects_duplicate_chunk_lines(tmp_path):
    store = _store([make_chunk("some text")])
    path = str(tmp_path / "store")
    store.save(path)
    chunks_file = os.path.join(path, "chunks.jsonl")
    line = open(chunks_file).read()
    with open(chunks_file, "a") as fh:
        fh.write(line)
    with pytest.raises(StoreError) as exc_info:
        ChunkStore.load(path)
    assert exc_info.value.code == "duplicate-chunk"


def test_load_names_corrupt_jsonl_line(tmp_path):
    store = _store([make_chunk("some text")])
    path = str(tmp_path / "store")
    store.save(path)
    with open(os.path.join(path, "chunks.jsonl"), "a") as fh:
        fh.write("{broken\n")
    with pytest.raises(StoreError) as exc_info:
        ChunkStore.load(path)
    assert "line 2" in exc_info.value.message


def test_constructor_rejects_bad_bm25_params():
    with pytest.raises(ConfigError):
        ChunkStore(k1=0.0)
    with pytest.raises(ConfigError):
        ChunkStore(b=1.5)
