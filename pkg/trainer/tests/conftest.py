"""Shared fixtures: synthetic pair suites, one trained artifact, and a chunk
store built through the retrieval engine's command line (the engine is only
ever driven as an external tool here)."""

import os
from types import SimpleNamespace

import pytest

from dpo_trainer import TrainConfig, make_separable_pairs, split_holdout, train

from engine_cli import TOY_DIR, run_engine


@pytest.fixture(scope="session")
def separable_suite():
    pairs = make_separable_pairs(100, seed=1)
    train_pairs, holdout = split_holdout(pairs, 0.2, seed=0)
    return train_pairs, holdout


@pytest.fixture(scope="session")
def trained(separable_suite):
    train_pairs, _ = separable_suite
    return train(train_pairs, TrainConfig())


@pytest.fixture(scope="session")
def engine_workspace(tmp_path_factory):
    """One toy filing ingested and indexed; store paths are cwd-relative."""
    root = tmp_path_factory.mktemp("engine")
    config = root / "config.yaml"
    config.write_text("store_path: store\nrerank:\n  query_time: 2024-09-30\n")
    ingest = run_engine(
        "ingest",
        os.path.join(TOY_DIR, "acme_2024_content_list.json"),
        "--config", "config.yaml",
        "--pub-date", "2024-05-15",
        "--out", "chunks.jsonl",
        cwd=root,
    )
    assert ingest.returncode == 0, ingest.stderr
    index = run_engine("index", "--config", "config.yaml", "--chunks", "chunks.jsonl", cwd=root)
    assert index.returncode == 0, index.stderr
    return SimpleNamespace(root=root, chunks=root / "chunks.jsonl")
