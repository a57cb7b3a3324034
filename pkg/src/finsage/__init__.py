"""Multi-path retrieval engine for financial filings.

Ingestion turns parsed filings into linked, embedded chunks; the store
serves exact dense, BM25, and segment-metadata search; retrieval unions
four query paths (dense, BM25, metadata, HyDE) and bundles neighbors;
re-ranking applies a cross-encoder with a recency bonus. Deterministic
stub model clients make every stage runnable offline.
"""

from .chunks import Chunk, chunk_id_for
from .config import EngineConfig, load_config
from .errors import ClientError, ConfigError, FinSageError, InputDataError, StoreError
from .store import ChunkStore, SearchHit

__all__ = [
    "Chunk",
    "ChunkStore",
    "ClientError",
    "ConfigError",
    "EngineConfig",
    "FinSageError",
    "InputDataError",
    "SearchHit",
    "StoreError",
    "chunk_id_for",
    "load_config",
]

__version__ = "0.1.0"
