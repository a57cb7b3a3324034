"""Shared fixtures: the toy filing corpus, ingested once through the real pipeline."""

import json
import os

import pytest

from finsage.clients import build_clients
from finsage.config import load_config
from finsage.ingest import ingest_document
from finsage.store import ChunkStore

from toycorpus import (
    DATA_DIR,
    DOC_DATES,
    MARKERS,
    QUERY_SUITE,
    load_toy_blocks,
    make_chunk,
)


@pytest.fixture(scope="session")
def toy_config():
    return load_config(os.path.join(DATA_DIR, "config.yaml"), env={})


@pytest.fixture(scope="session")
def toy_clients(toy_config):
    return build_clients(toy_config.clients)


@pytest.fixture(scope="session")
def toy_store(toy_config, toy_clients):
    """The full toy corpus in one store. Session-scoped: do not mutate."""
    store = ChunkStore(k1=toy_config.index_k1, b=toy_config.index_b)
    for doc_id, blocks in load_toy_blocks().items():
        result = ingest_document(
            blocks,
            document_id=doc_id,
            publication_date=DOC_DATES[doc_id],
            clients=toy_clients,
            settings=toy_config.ingest,
        )
        store.upsert_chunks(result.chunks)
    return store


@pytest.fixture(scope="session")
def toy_ids(toy_store):
    ids = {}
    for name, needle in MARKERS.items():
        matches = [c.chunk_id for c in toy_store.all_chunks() if needle in c.text]
        assert len(matches) == 1, f"marker {name} matched {len(matches)} chunks"
        ids[name] = matches[0]
    return ids


@pytest.fixture(scope="session")
def toy_queries(toy_ids):
    return [
        {"query_id": qid, "query": text, "relevant_chunk_ids": [toy_ids[m] for m in rel]}
        for qid, text, rel in QUERY_SUITE
    ]


@pytest.fixture(scope="session")
def toy_queries_path(tmp_path_factory, toy_queries):
    path = tmp_path_factory.mktemp("queries") / "queries.jsonl"
    with open(path, "w", encoding="utf-8") as fh:
        for row in toy_queries:
            fh.write(json.dumps(row) + "\n")
    return str(path)


@pytest.fixture(scope="session")
def toy_store_dir(tmp_path_factory, toy_store):
    path = str(tmp_path_factory.mktemp("persist") / "store")
    toy_store.save(path)
    return path


@pytest.fixture
def chunk_factory():
    return make_chunk
