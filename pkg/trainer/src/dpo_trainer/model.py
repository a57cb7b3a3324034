"""A small CPU-trainable cross-encoder with low-rank adapters.

The frozen base is a hashed-token embedding table; what trains are two
low-rank factors added to that table plus a zero-initialized scoring head.
Zero init makes the untrained model score every (query, passage) pair with
logit exactly 0.0, i.e. probability one half, which anchors the symmetric
starting loss.

Token ids come from a stable hash, so a saved artifact scores identically
wherever it is loaded.
"""

from __future__ import annotations

import hashlib
import math
import re

import torch
from torch import nn

_TOKEN_RE = re.compile(r"[a-z0-9]+")


def _token_ids(text: str, buckets: int) -> list[int]:
    return [
        int.from_bytes(hashlib.blake2b(t.encode("utf-8"), digest_size=8).digest(), "big")
        % buckets
        for t in _TOKEN_RE.findall(text.lower())
    ]


class TinyCrossEncoder(nn.Module):
    def __init__(
        self,
        buckets: int = 4096,
        dim: int = 64,
        lora_rank: int = 32,
        lora_alpha: int = 64,
        seed: int = 0,
    ) -> None:
        super().__init__()
        if lora_rank < 1:
            raise ValueError("lora_rank must be >= 1")
        self.buckets = buckets
        self.dim = dim
        self.lora_rank = lora_rank
        self.lora_alpha = lora_alpha
        self.seed = seed

        generator = torch.Generator().manual_seed(seed)
        base = torch.randn(buckets, dim, generator=generator) / math.sqrt(dim)
        self.base = nn.Embedding(buckets, dim, _weight=base)
        self.base.weight.requires_grad_(False)

        # classic low-rank pair: one factor random, the other zero, so the
        # adapter contributes nothing until trained
        self.lora_a = nn.Parameter(
            torch.randn(lora_rank, dim, generator=generator) / math.sqrt(lora_rank)
        )
        self.lora_b = nn.Parameter(torch.zeros(buckets, lora_rank))

        self.head = nn.Linear(4 * dim, 1)
        nn.init.zeros_(self.head.weight)
        nn.init.zeros_(self.head.bias)

        self._id_cache: dict[str, torch.Tensor] = {}

    def hparams(self) -> dict:
        return {
            "buckets": self.buckets,
            "dim": self.dim,
            "lora_rank": self.lora_rank,
            "lora_alpha": self.lora_alpha,
            "seed": self.seed,
        }

    def _ids(self, text: str) -> torch.Tensor:
        cached = self._id_cache.get(text)
        if cached is None:
            cached = torch.tensor(_token_ids(text, self.buckets), dtype=torch.long)
            self._id_cache[text] = cached
        return cached

    def _embed(self, ids: torch.Tensor) -> torch.Tensor:
        if ids.numel() == 0:
            return self.base.weight.new_zeros(self.dim)
        scale = self.lora_alpha / self.lora_rank
        vectors = self.base(ids) + (self.lora_b[ids] @ self.lora_a) * scale
        return vectors.mean(dim=0)

    def pair_logits(self, query: str, passages: list[str]) -> torch.Tensor:
        """Relevance logits for one query against each passage."""
        q = self._embed(self._ids(query))
        rows = []
        for passage in passages:
            p = self._embed(self._ids(passage))
            rows.append(torch.cat([q, p, q * p, (q - p).abs()]))
        return self.head(torch.stack(rows)).squeeze(-1)

    @torch.no_grad()
    def score(self, query: str, passages: list[str]) -> list[float]:
        """Wire-format scores: one plain float logit per passage."""
        passages = list(passages)
        if not passages:
            return []
        return [float(x) for x in self.pair_logits(query, passages)]

    def probabilities(self, query: str, passages: list[str]) -> list[float]:
        """Relevance probabilities in the open interval (0, 1)."""
        out = []
        for logit in self.score(query, passages):
            if logit >= 0:
                p = 1.0 / (1.0 + math.exp(-logit))
            else:
                e = math.exp(logit)
                p = e / (1.0 + e)
            out.append(min(max(p, 1e-12), 1.0 - 1e-12))
        return out


def save_artifact(model: TinyCrossEncoder, path: str, loss_curve: list[float]) -> None:
    torch.save(
        {"hparams": model.hparams(), "state": model.state_dict(), "loss_curve": list(loss_curve)},
        path,
    )


def load_artifact(path: str) -> tuple[TinyCrossEncoder, list[float]]:
    payload = torch.load(path, weights_only=True)
    model = TinyCrossEncoder(**payload["hparams"])
    model.load_state_dict(payload["state"])
    model.eval()
    return model, list(payload["loss_curve"])
