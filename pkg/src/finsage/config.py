"""Engine configuration: defaults, YAML file, FINSAGE_ env vars, CLI overrides.

Precedence, lowest to highest: built-in defaults, config file, environment,
explicit overrides. Environment variables use FINSAGE_<SECTION>__<KEY>
(double underscore between nesting levels), e.g. FINSAGE_RETRIEVAL__K_DENSE=5
or FINSAGE_SEED=3; values parse as YAML scalars. FINSAGE_KERNELS is reserved
for backend selection and ignored here. Unknown keys anywhere are errors.
"""

from __future__ import annotations

import copy
import os
from dataclasses import dataclass, field
from datetime import date

import yaml

from .clients import ClientConfig
from .errors import ConfigError
from .ingest import IngestSettings
from .rerank import RerankSettings
from .retrieval import RetrievalSettings

_CLIENT_ROLES = ("embedder", "generator", "cross_encoder")

_DEFAULTS: dict = {
    "store_path": "store",
    "seed": 0,
    "ingest": {
        "tau_dedup": 0.7,
        "coref_k": 4,
        "segment_budget": 200,
        "segment_budget_unit": "characters",
    },
    "index": {"k1": 1.5, "b": 0.75},
    "retrieval": {
        "k_dense": 10,
        "k_bm25": 10,
        "k_meta": 3,
        "k_hyde": 10,
        "hyde_hypotheses": 3,
        "tau_expand": 0.85,
        "bundle_limit": 5,
        "rerank_units": "bundles",
    },
    "rerank": {"k": 5, "beta": 0.1, "query_time": None},
    "clients": {
        role: {
            "kind": "stub",
            "endpoint": None,
            "timeout_seconds": 30.0,
            "max_concurrency": 4,
            "retry": {"attempts": 3, "backoff_seconds": 0.2},
        }
        for role in ("embedder", "generator", "cross_encoder")
    },
}


@dataclass
class EngineConfig:
    store_path: str
    seed: int
    ingest: IngestSettings
    index_k1: float
    index_b: float
    retrieval: RetrievalSettings
    rerank: RerankSettings
    clients: dict[str, ClientConfig] = field(default_factory=dict)

    def validate(self) -> None:
        if not isinstance(self.seed, int):
            raise ConfigError("bad-seed", f"seed must be an integer, got {self.seed!r}")
        ing = self.ingest
        if not 0.0 < ing.tau_dedup <= 1.0:
            raise ConfigError("bad-threshold", f"ingest.tau_dedup must be in (0, 1], got {ing.tau_dedup}")
        if ing.coref_k < 0:
            raise ConfigError("bad-coref-k", "ingest.coref_k must be >= 0")
        if ing.segment_budget < 1:
            raise ConfigError("bad-budget", "ingest.segment_budget must be >= 1")
        if ing.segment_budget_unit not in ("characters", "tokens"):
            raise ConfigError(
                "bad-budget-unit",
                f"ingest.segment_budget_unit must be characters or tokens, got {ing.segment_budget_unit!r}",
            )
        if self.index_k1 <= 0:
            raise ConfigError("bad-bm25", "index.k1 must be positive")
        if not 0.0 <= self.index_b <= 1.0:
            raise ConfigError("bad-bm25", "index.b must be in [0, 1]")
        ret = self.retrieval
        for name in ("k_dense", "k_bm25", "k_meta", "k_hyde"):
            if getattr(ret, name) < 0:
                raise ConfigError("bad-k", f"retrieval.{name} must be >= 0")
        if ret.k_dense == 0 and ret.k_bm25 == 0 and ret.k_meta == 0 and ret.k_hyde == 0:
            raise ConfigError("bad-k", "at least one retrieval path must be enabled")
        if ret.hyde_hypotheses < 1:
            raise ConfigError("bad-hyde", "retrieval.hyde_hypotheses must be >= 1")
        if not 0.0 < ret.tau_expand <= 1.0:
            raise ConfigError("bad-threshold", f"retrieval.tau_expand must be in (0, 1], got {ret.tau_expand}")
        if ret.bundle_limit < 1:
            raise ConfigError("bad-bundle-limit", "retrieval.bundle_limit must be >= 1")
        if ret.rerank_units not in ("bundles", "chunks"):
            raise ConfigError(
                "bad-rerank-units",
                f"retrieval.rerank_units must be bundles or chunks, got {ret.rerank_units!r}",
            )
        if self.rerank.k < 1:
            raise ConfigError("bad-k", "rerank.k must be >= 1")
        if self.rerank.beta < 0:
            raise ConfigError("bad-beta", "rerank.beta must be >= 0")
        for role in _CLIENT_ROLES:
            if role not in self.clients:
                raise ConfigError("missing-client", f"clients.{role} is required")
            self.clients[role].validate()

    def snapshot(self) -> dict:
        """Plain round-trippable dict of the effective configuration."""
        query_time = self.rerank.query_time
        return {
            "store_path": self.store_path,
            "seed": self.seed,
            "ingest": {
                "tau_dedup": self.ingest.tau_dedup,
                "coref_k": self.ingest.coref_k,
                "segment_budget": self.ingest.segment_budget,
                "segment_budget_unit": self.ingest.segment_budget_unit,
            },
            "index": {"k1": self.index_k1, "b": self.index_b},
            "retrieval": {
                "k_dense": self.retrieval.k_dense,
                "k_bm25": self.retrieval.k_bm25,
                "k_meta": self.retrieval.k_meta,
                "k_hyde": self.retrieval.k_hyde,
                "hyde_hypotheses": self.retrieval.hyde_hypotheses,
                "tau_expand": self.retrieval.tau_expand,
                "bundle_limit": self.retrieval.bundle_limit,
                "rerank_units": self.retrieval.rerank_units,
            },
            "rerank": {
                "k": self.rerank.k,
                "beta": self.rerank.beta,
                "query_time": query_time.isoformat() if query_time else None,
            },
            "clients": {role: cfg.to_dict() for role, cfg in self.clients.items()},
        }


def _merge(base: dict, incoming: dict, path: str = "") -> None:
    for key, value in incoming.items():
        where = f"{path}.{key}" if path else str(key)
        if key not in base:
            raise ConfigError("unknown-key", f"unknown config key {where!r}")
        if isinstance(base[key], dict):
            if not isinstance(value, dict):
                raise ConfigError("bad-config", f"{where} must be a mapping")
            _merge(base[key], value, where)
        else:
            base[key] = value


def _parse_date(value, where: str) -> date | None:
    if value is None:
        return None
    if isinstance(value, date):
        return value
    if isinstance(value, str):
        try:
            return date.fromisoformat(value)
        except ValueError as exc:
            raise ConfigError("bad-date", f"{where}: {exc}") from exc
    raise ConfigError("bad-date", f"{where} must be an ISO date, got {value!r}")


def _env_overrides(env: dict) -> dict:
    out: dict = {}
    for name, raw in env.items():
        if not name.startswith("FINSAGE_") or name == "FINSAGE_KERNELS":
            continue
        keys = [part.lower() for part in name[len("FINSAGE_") :].split("__")]
        try:
            value = yaml.safe_load(raw)
        except yaml.YAMLError as exc:
            raise ConfigError("bad-env", f"{name}: cannot parse value: {exc}") from exc
        node = out
        for key in keys[:-1]:
            node = node.setdefault(key, {})
        node[keys[-1]] = value
    return out


def load_config(
    path: str | None = None,
    env: dict | None = None,
    overrides: dict | None = None,
) -> EngineConfig:
    data = copy.deepcopy(_DEFAULTS)
    if path is not None:
        try:
            with open(path, "r", encoding="utf-8") as handle:
                loaded = yaml.safe_load(handle)
        except OSError as exc:
            raise ConfigError("missing-config", f"cannot read {path}: {exc}") from exc
        except yaml.YAMLError as exc:
            raise ConfigError("bad-config", f"{path}: invalid YAML: {exc}") from exc
        if loaded is None:
            loaded = {}
        if not isinstance(loaded, dict):
            raise ConfigError("bad-config", f"{path}: top level must be a mapping")
        _merge(data, loaded)
    env_map = dict(os.environ) if env is None else env
    _merge(data, _env_overrides(env_map))
    if overrides:
        _merge(data, overrides)

    try:
        clients = {
            role: ClientConfig.from_dict(data["clients"][role]) for role in _CLIENT_ROLES
        }
    except (TypeError, ValueError) as exc:
        raise ConfigError("bad-config", f"clients: {exc}") from exc
    try:
        config = EngineConfig(
            store_path=str(data["store_path"]),
            seed=data["seed"],
            ingest=IngestSettings(
                tau_dedup=float(data["ingest"]["tau_dedup"]),
                coref_k=int(data["ingest"]["coref_k"]),
                segment_budget=int(data["ingest"]["segment_budget"]),
                segment_budget_unit=str(data["ingest"]["segment_budget_unit"]),
            ),
            index_k1=float(data["index"]["k1"]),
            index_b=float(data["index"]["b"]),
            retrieval=RetrievalSettings(
                k_dense=int(data["retrieval"]["k_dense"]),
                k_bm25=int(data["retrieval"]["k_bm25"]),
                k_meta=int(data["retrieval"]["k_meta"]),
                k_hyde=int(data["retrieval"]["k_hyde"]),
                hyde_hypotheses=int(data["retrieval"]["hyde_hypotheses"]),
                tau_expand=float(data["retrieval"]["tau_expand"]),
                bundle_limit=int(data["retrieval"]["bundle_limit"]),
                rerank_units=str(data["retrieval"]["rerank_units"]),
            ),
            rerank=RerankSettings(
                k=int(data["rerank"]["k"]),
                beta=float(data["rerank"]["beta"]),
                query_time=_parse_date(data["rerank"]["query_time"], "rerank.query_time"),
            ),
            clients=clients,
        )
    except (TypeError, ValueError) as exc:
        raise ConfigError("bad-config", f"invalid configuration value: {exc}") from exc
    config.validate()
    return config
