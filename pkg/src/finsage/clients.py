"""Model client layer: protocols, deterministic stubs, and HTTP implementations.

Three capabilities are consumed by the engine, each behind a small protocol:

* embedder   -- texts to unit-norm dense vectors
* generator  -- role-tagged text generation (coref, summarize, paraphrase,
                hyde, textualize)
* scorer     -- cross-encoder relevance logits for (query, passage) pairs

The stubs are fully deterministic and dependency-free so the whole engine can
run and be tested offline. The HTTP clients speak a minimal JSON protocol
(POST /embed, /generate, /score) with bounded retries and a client-side
concurrency cap.
"""

from __future__ import annotations

import math
import re
import threading
import time
from dataclasses import dataclass, field
from typing import Protocol, Sequence

import numpy as np
import requests

from .errors import ClientError, ConfigError
from .textutil import char_trigrams, stable_bucket, tokenize

GENERATOR_ROLES = ("coref", "summarize", "paraphrase", "hyde", "textualize")

STUB_EMBEDDING_DIM = 64


class Embedder(Protocol):
    def embed_texts(self, texts: Sequence[str]) -> np.ndarray:
        """Return a (len(texts), dim) float64 array of unit-norm rows."""
        ...


class Generator(Protocol):
    def generate_texts(
        self, role: str, prompt: str, n: int = 1, context: Sequence[str] = ()
    ) -> list[str]:
        """Return exactly n generated texts for a role-tagged prompt."""
        ...


class Scorer(Protocol):
    def cross_score(self, query: str, passages: Sequence[str]) -> list[float]:
        """Return one raw relevance logit per passage."""
        ...


@dataclass(frozen=True)
class RetryPolicy:
    attempts: int = 3
    backoff_seconds: float = 0.2


@dataclass(frozen=True)
class ClientConfig:
    kind: str = "stub"  # "stub" | "http"
    endpoint: str | None = None
    timeout_seconds: float = 30.0
    max_concurrency: int = 4
    retry: RetryPolicy = field(default_factory=RetryPolicy)

    def validate(self) -> None:
        if self.kind not in ("stub", "http"):
            raise ConfigError("bad-client-kind", f"unknown client kind {self.kind!r}")
        if self.kind == "http" and not self.endpoint:
            raise ConfigError("missing-endpoint", "http client requires an endpoint")
        if self.max_concurrency < 1:
            raise ConfigError("bad-concurrency", "max_concurrency must be >= 1")
        if self.retry.attempts < 1:
            raise ConfigError("bad-retry", "retry attempts must be >= 1")
        if self.timeout_seconds <= 0:
            raise ConfigError("bad-timeout", "timeout must be positive")

    @classmethod
    def from_dict(cls, raw: dict) -> "ClientConfig":
        retry_raw = raw.get("retry", {})
        retry = RetryPolicy(
            attempts=int(retry_raw.get("attempts", 3)),
            backoff_seconds=float(retry_raw.get("backoff_seconds", 0.2)),
        )
        return cls(
            kind=raw.get("kind", "stub"),
            endpoint=raw.get("endpoint"),
            timeout_seconds=float(raw.get("timeout_seconds", 30.0)),
            max_concurrency=int(raw.get("max_concurrency", 4)),
            retry=retry,
        )

    def to_dict(self) -> dict:
        return {
            "kind": self.kind,
            "endpoint": self.endpoint,
            "timeout_seconds": self.timeout_seconds,
            "max_concurrency": self.max_concurrency,
            "retry": {
                "attempts": self.retry.attempts,
                "backoff_seconds": self.retry.backoff_seconds,
            },
        }


class StubEmbedder:
    """Hashed character-trigram bag, L2-normalized.

    Depends only on the text bytes, so identical texts always embed to
    identical vectors across processes and platforms.
    """

    def __init__(self, dim: int = STUB_EMBEDDING_DIM) -> None:
        if dim < 1:
            raise ConfigError("bad-dim", "embedding dim must be >= 1")
        self.dim = dim

    def embed_texts(self, texts: Sequence[str]) -> np.ndarray:
        out = np.zeros((len(texts), self.dim), dtype=np.float64)
        for row, text in enumerate(texts):
            for gram in char_trigrams(text):
                out[row, stable_bucket(gram, self.dim)] += 1.0
            norm = float(np.linalg.norm(out[row]))
            out[row] /= norm  # at least one gram, so norm > 0
        return out


def split_subqueries(query: str) -> list[str]:
    """Break a compound question into sub-questions.

    Splits after question marks, then on top-level "and" conjunctions.
    A simple question comes back unchanged as a single entry.
    """
    pieces = [p for p in re.split(r"(?<=\?)\s*", query) if p.strip()]
    if not pieces:
        pieces = [query]
    parts: list[str] = []
    for piece in pieces:
        piece = re.sub(r"^[Aa]nd\s+", "", piece.strip())
        for sub in re.split(r"\s+[Aa]nd\s+", piece):
            sub = sub.strip()
            if sub:
                parts.append(sub)
    return parts or [query.strip() or query]


class StubGenerator:
    """Deterministic role-tagged generation used for offline runs and tests.

    coref       -> returns the prompt unchanged
    summarize   -> first 10 whitespace tokens of the prompt
    paraphrase  -> sub-questions of the prompt's last line, newline-joined
    hyde        -> echoes the prompt as each hypothetical passage
    textualize  -> "KIND(path) ctx=..." built from the prompt and context
    """

    def generate_texts(
        self, role: str, prompt: str, n: int = 1, context: Sequence[str] = ()
    ) -> list[str]:
        if n < 1:
            raise ClientError("bad-n", "n must be >= 1")
        if role == "coref":
            text = prompt
        elif role == "summarize":
            text = " ".join(prompt.split()[:10])
        elif role == "paraphrase":
            lines = [line for line in prompt.splitlines() if line.strip()]
            target = lines[-1] if lines else prompt
            text = "\n".join(split_subqueries(target))
        elif role == "hyde":
            text = prompt
        elif role == "textualize":
            kind, _, path = prompt.partition("|")
            ctx_tokens = " ".join(context).split()[:5]
            text = f"{kind.upper()}({path}) ctx={' '.join(ctx_tokens)}"
        else:
            raise ClientError("bad-role", f"unknown generator role {role!r}")
        return [text] * n


class StubScorer:
    """Token-overlap relevance: logit of the clamped Jaccard similarity.

    An exact copy of the query scores sigmoid(logit) = 1 - 1e-6; a passage
    sharing no tokens scores 1e-6.
    """

    _CLAMP = 1e-6

    def cross_score(self, query: str, passages: Sequence[str]) -> list[float]:
        query_tokens = set(tokenize(query))
        logits = []
        for passage in passages:
            passage_tokens = set(tokenize(passage))
            union = query_tokens | passage_tokens
            if union:
                overlap = len(query_tokens & passage_tokens) / len(union)
            else:
                overlap = 1.0  # two empty token sets are identical
            p = min(max(overlap, self._CLAMP), 1.0 - self._CLAMP)
            logits.append(math.log(p / (1.0 - p)))
        return logits


class _HttpBase:
    """Shared POST plumbing: retries with exponential backoff, concurrency cap."""

    def __init__(self, config: ClientConfig) -> None:
        config.validate()
        if config.kind != "http":
            raise ConfigError("bad-client-kind", "expected an http client config")
        self._config = config
        self._session = requests.Session()
        self._gate = threading.Semaphore(config.max_concurrency)

    def _post(self, path: str, payload: dict) -> dict:
        url = self._config.endpoint.rstrip("/") + path
        retry = self._config.retry
        last_message = "request failed"
        for attempt in range(retry.attempts):
            try:
                with self._gate:
                    response = self._session.post(
                        url, json=payload, timeout=self._config.timeout_seconds
                    )
            except requests.RequestException as exc:
                last_message = str(exc)
            else:
                if response.status_code == 200:
                    try:
                        body = response.json()
                    except ValueError as exc:
                        raise ClientError(
                            "bad-response", f"non-JSON response from {url}: {exc}", url=url
                        ) from exc
                    if not isinstance(body, dict):
                        raise ClientError("bad-response", f"expected JSON object from {url}", url=url)
                    return body
                if response.status_code < 500:
                    raise ClientError(
                        "http-error",
                        f"{url} returned status {response.status_code}",
                        url=url,
                        status=response.status_code,
                    )
                last_message = f"status {response.status_code}"
            if attempt + 1 < retry.attempts:
                time.sleep(retry.backoff_seconds * (2**attempt))
        raise ClientError(
            "client-unavailable",
            f"{url} failed after {retry.attempts} attempts: {last_message}",
            retryable=True,
            url=url,
        )


class HttpEmbedder(_HttpBase):
    def embed_texts(self, texts: Sequence[str]) -> np.ndarray:
        body = self._post("/embed", {"texts": list(texts)})
        vectors = body.get("vectors")
        if not isinstance(vectors, list) or len(vectors) != len(texts):
            raise ClientError("bad-response", "embed response must carry one vector per text")
        try:
            out = np.asarray(vectors, dtype=np.float64)
        except ValueError as exc:
            raise ClientError("bad-response", f"ragged embedding vectors: {exc}") from exc
        if out.ndim != 2:
            raise ClientError("bad-response", "embedding vectors must share one dimension")
        norms = np.linalg.norm(out, axis=1)
        if not np.all(np.abs(norms - 1.0) <= 1e-6):
            raise ClientError("bad-response", "embedding vectors must be unit-norm")
        return out


class HttpGenerator(_HttpBase):
    def generate_texts(
        self, role: str, prompt: str, n: int = 1, context: Sequence[str] = ()
    ) -> list[str]:
        payload: dict = {"role": role, "prompt": prompt, "n": n}
        if context:
            payload["context"] = list(context)
        body = self._post("/generate", payload)
        texts = body.get("texts")
        if not isinstance(texts, list) or len(texts) != n or not all(isinstance(t, str) for t in texts):
            raise ClientError("bad-response", f"generate response must carry exactly {n} texts")
        return texts


class HttpScorer(_HttpBase):
    def cross_score(self, query: str, passages: Sequence[str]) -> list[float]:
        body = self._post("/score", {"query": query, "passages": list(passages)})
        logits = body.get("logits")
        if not isinstance(logits, list) or len(logits) != len(passages):
            raise ClientError("bad-response", "score response must carry one logit per passage")
        try:
            return [float(x) for x in logits]
        except (TypeError, ValueError) as exc:
            raise ClientError("bad-response", f"non-numeric logit: {exc}") from exc


@dataclass
class ClientBundle:
    embedder: Embedder
    generator: Generator
    scorer: Scorer


def build_embedder(config: ClientConfig) -> Embedder:
    config.validate()
    return StubEmbedder() if config.kind == "stub" else HttpEmbedder(config)


def build_generator(config: ClientConfig) -> Generator:
    config.validate()
    return StubGenerator() if config.kind == "stub" else HttpGenerator(config)


def build_scorer(config: ClientConfig) -> Scorer:
    config.validate()
    return StubScorer() if config.kind == "stub" else HttpScorer(config)


def build_clients(configs: dict[str, ClientConfig]) -> ClientBundle:
    return ClientBundle(
        embedder=build_embedder(configs["embedder"]),
        generator=build_generator(configs["generator"]),
        scorer=build_scorer(configs["cross_encoder"]),
    )
