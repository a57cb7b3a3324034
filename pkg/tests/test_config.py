"""Configuration layering: defaults, file, environment, explicit overrides."""

from datetime import date

import pytest
import yaml

from finsage.config import load_config
from finsage.errors import ConfigError


def test_defaults_without_any_sources():
    cfg = load_config(None, env={})
    assert cfg.store_path == "store"
    assert cfg.seed == 0
    assert cfg.ingest.tau_dedup == 0.7
    assert cfg.ingest.coref_k == 4
    assert cfg.ingest.segment_budget == 200
    assert cfg.ingest.segment_budget_unit == "characters"
    assert (cfg.index_k1, cfg.index_b) == (1.5, 0.75)
    assert cfg.retrieval.k_dense == 10
    assert cfg.retrieval.k_meta == 3
    assert cfg.retrieval.tau_expand == 0.85
    assert cfg.retrieval.bundle_limit == 5
    assert cfg.retrieval.rerank_units == "bundles"
    assert cfg.rerank.k == 5
    assert cfg.rerank.beta == 0.1
    assert cfg.rerank.query_time is None
    for role in ("embedder", "generator", "cross_encoder"):
        assert cfg.clients[role].kind == "stub"


def test_file_overrides_defaults(tmp_path):
    path = tmp_path / "config.yaml"
    path.write_text(
        yaml.safe_dump(
            {
                "seed": 7,
                "ingest": {"tau_dedup": 0.9},
                "retrieval": {"k_dense": 4, "rerank_units": "chunks"},
                "rerank": {"query_time": "2024-09-30"},
            }
        )
    )
    cfg = load_config(str(path), env={})
    assert cfg.seed == 7
    assert cfg.ingest.tau_dedup == 0.9
    assert cfg.ingest.coref_k == 4  # untouched default
    assert cfg.retrieval.k_dense == 4
    assert cfg.retrieval.rerank_units == "chunks"
    assert cfg.rerank.query_time == date(2024, 9, 30)


def test_precedence_env_beats_file_overrides_beat_env(tmp_path):
    path = tmp_path / "config.yaml"
    path.write_text(yaml.safe_dump({"retrieval": {"k_dense": 7}, "seed": 1}))

    env = {"FINSAGE_RETRIEVAL__K_DENSE": "5", "FINSAGE_SEED": "2"}
    cfg = load_config(str(path), env=env)
    assert cfg.retrieval.k_dense == 5
    assert cfg.seed == 2

    cfg = load_config(str(path), env=env, overrides={"retrieval": {"k_dense": 3}})
    assert cfg.retrieval.k_dense == 3
    assert cfg.seed == 2


def test_env_values_parse_as_yaml_scalars():
    env = {
        "FINSAGE_INGEST__TAU_DEDUP": "0.55",
        "FINSAGE_RERANK__QUERY_TIME": "2024-01-02",
        "FINSAGE_STORE_PATH": "/tmp/idx",
    }
    cfg = load_config(None, env=env)
    assert cfg.ingest.tau_dedup == 0.55
    assert cfg.rerank.query_time == date(2024, 1, 2)
    assert cfg.store_path == "/tmp/idx"


def test_kernel_selector_env_var_is_not_a_config_key():
    cfg = load_config(None, env={"FINSAGE_KERNELS": "numpy"})
    assert cfg.seed == 0  # loads fine, variable is left to the kernel layer


def test_unrelated_env_vars_are_ignored():
    cfg = load_config(None, env={"PATH": "/bin", "FINSAGEX_SEED": "9"})
    assert cfg.seed == 0


def test_unknown_keys_rejected(tmp_path):
    path = tmp_path / "config.yaml"
    path.write_text(yaml.safe_dump({"retrieval": {"k_dence": 4}}))
    with pytest.raises(ConfigError) as exc_info:
        load_config(str(path), env={})
    assert exc_info.value.code == "unknown-key"
    assert "retrieval.k_dence" in exc_info.value.message

    with pytest.raises(ConfigError):
        load_config(None, env={"FINSAGE_RETRIEVAL__K_DENCE": "4"})
    with pytest.raises(ConfigError):
        load_config(None, env={}, overrides={"not_a_section": 1})


def test_file_errors(tmp_path):
    with pytest.raises(ConfigError) as exc_info:
        load_config(str(tmp_path / "absent.yaml"), env={})
    assert exc_info.value.code == "missing-config"

    bad = tmp_path / "bad.yaml"
    bad.write_text("retrieval: [unclosed\n")
    with pytest.raises(ConfigError) as exc_info:
        load_config(str(bad), env={})
    assert exc_info.value.code == "bad-config"

    scalar = tmp_path / "scalar.yaml"
    scalar.write_text("- just\n- a\n- list\n")
    with pytest.raises(ConfigError):
        load_config(str(scalar), env={})

    empty = tmp_path / "empty.yaml"
    empty.write_text("")
    cfg = load_config(str(empty), env={})
    assert cfg.seed == 0


@pytest.mark.parametrize(
    ("overrides", "code"),
    [
        ({"ingest": {"tau_dedup": 0.0}}, "bad-threshold"),
        ({"ingest": {"tau_dedup": 1.5}}, "bad-threshold"),
        ({"ingest": {"coref_k": -1}}, "bad-coref-k"),
        ({"ingest": {"segment_budget": 0}}, "bad-budget"),
        ({"ingest": {"segment_budget_unit": "words"}}, "bad-budget-unit"),
        ({"index": {"k1": 0.0}}, "bad-bm25"),
        ({"index": {"b": 1.5}}, "bad-bm25"),
        ({"retrieval": {"k_dense": -1}}, "bad-k"),
        ({"retrieval": {"k_dense": 0, "k_bm25": 0, "k_meta": 0, "k_hyde": 0}}, "bad-k"),
        ({"retrieval": {"hyde_hypotheses": 0}}, "bad-hyde"),
        ({"retrieval": {"tau_expand": 0.0}}, "bad-threshold"),
        ({"retrieval": {"bundle_limit": 0}}, "bad-bundle-limit"),
        ({"retrieval": {"rerank_units": "paragraphs"}}, "bad-rerank-units"),
        ({"rerank": {"k": 0}}, "bad-k"),
        ({"rerank": {"beta": -0.1}}, "bad-beta"),
        ({"rerank": {"query_time": "soon"}}, "bad-date"),
        ({"seed": "zero"}, "bad-seed"),
        ({"clients": {"embedder": {"kind": "grpc"}}}, "bad-client-kind"),
        ({"clients": {"embedder": {"kind": "http"}}}, "missing-endpoint"),
        ({"clients": {"embedder": {"max_concurrency": 0}}}, "bad-concurrency"),
    ],
)
def test_invalid_values_rejected(overrides, code):
    with pytest.raises(ConfigError) as exc_info:
        load_config(None, env={}, overrides=overrides)
    assert exc_info.value.code == code


def test_http_client_config_from_file(tmp_path):
    path = tmp_path / "config.yaml"
    path.write_text(
        yaml.safe_dump(
            {
                "clients": {
                    "embedder": {
                        "kind": "http",
                        "endpoint": "http://127.0.0.1:8100",
                        "timeout_seconds": 5,
                        "retry": {"attempts": 2, "backoff_seconds": 0.01},
                    }
                }
            }
        )
    )
    cfg = load_config(str(path), env={})
    embedder = cfg.clients["embedder"]
    assert embedder.kind == "http"
    assert embedder.endpoint == "http://127.0.0.1:8100"
    assert embedder.timeout_seconds == 5.0
    assert embedder.retry.attempts == 2
    assert cfg.clients["generator"].kind == "stub"


def test_snapshot_round_trips_through_a_file(tmp_path):
    first = load_config(
        None,
        env={"FINSAGE_RERANK__BETA": "0.25"},
        overrides={"retrieval": {"k_meta": 2}, "rerank": {"query_time": "2024-09-30"}},
    )
    path = tmp_path / "snapshot.yaml"
    path.write_text(yaml.safe_dump(first.snapshot()))
    second = load_config(str(path), env={})
    assert second.snapshot() == first.snapshot()
    assert second.rerank.beta == 0.25
    assert second.rerank.query_time == date(2024, 9, 30)
