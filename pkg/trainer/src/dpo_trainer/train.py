"""Preference training loop and evaluation helpers.

The objective treats preference learning as binary classification: for a
pair with positive probability K+ and negative probability K-, the term is
-ln(K+ / (K+ + K-)), averaged over every (positive, negative) combination.
A model that cannot tell the two apart sits at ln 2.
"""

from __future__ import annotations

import contextlib
import math
import random
from dataclasses import dataclass, field

import torch

from .data import PreferencePair
from .errors import DataError, TrainingError
from .model import TinyCrossEncoder

MIN_PAIRS = 10


@dataclass
class TrainConfig:
    lora_rank: int = 32
    lora_alpha: int = 64
    learning_rate: float = 1e-4
    per_device_batch: int = 1
    grad_accum: int = 2
    epochs: int = 10
    precision: str = "bf16"  # falls back to fp32 where bf16 is unavailable
    base_model: str = "hashed-bow-64"
    seed: int = 0

    def validate(self) -> None:
        if self.lora_rank < 1 or self.lora_alpha < 1:
            raise DataError("lora_rank and lora_alpha must be >= 1")
        if self.learning_rate <= 0:
            raise DataError("learning_rate must be positive")
        if self.per_device_batch < 1 or self.grad_accum < 1:
            raise DataError("per_device_batch and grad_accum must be >= 1")
        if self.epochs < 1:
            raise DataError("epochs must be >= 1")
        if self.precision not in ("bf16", "fp32"):
            raise DataError(f"precision must be bf16 or fp32, got {self.precision!r}")
        if self.base_model != "hashed-bow-64":
            raise DataError(f"unknown base model {self.base_model!r}")


@dataclass
class TrainResult:
    model: TinyCrossEncoder
    loss_curve: list[float] = field(default_factory=list)


def build_model(config: TrainConfig) -> TinyCrossEncoder:
    config.validate()
    return TinyCrossEncoder(
        lora_rank=config.lora_rank, lora_alpha=config.lora_alpha, seed=config.seed
    )


def evaluate_loss(model: TinyCrossEncoder, pairs: list[PreferencePair]) -> float:
    """Mean loss over all expanded (positive, negative) terms, in float64."""
    if not pairs:
        raise DataError("evaluate_loss needs at least one pair")
    terms = []
    for pair in pairs:
        probs = model.probabilities(pair.query, list(pair.pos) + list(pair.neg))
        k_pos, k_negs = probs[0], probs[1:]
        for k_neg in k_negs:
            terms.append(-math.log(k_pos / (k_pos + k_neg)))
    return sum(terms) / len(terms)


def mean_reciprocal_rank(model: TinyCrossEncoder, pairs: list[PreferencePair]) -> float:
    """MRR of each pair's positive among its own negatives.

    Ties count against the model: a candidate scoring equal to the positive
    ranks above it, so an untrained all-zero scorer is not credited with a
    lucky ordering.
    """
    if not pairs:
        raise DataError("mean_reciprocal_rank needs at least one pair")
    total = 0.0
    for pair in pairs:
        scores = model.score(pair.query, list(pair.pos) + list(pair.neg))
        pos_score = scores[0]
        rank = 1 + sum(1 for s in scores[1:] if s >= pos_score)
        total += 1.0 / rank
    return total / len(pairs)


def _autocast(precision: str):
    if precision == "bf16" and torch.amp.autocast_mode.is_autocast_available("cpu"):
        return torch.autocast(device_type="cpu", dtype=torch.bfloat16)
    return contextlib.nullcontext()


def _batch_loss(model: TinyCrossEncoder, batch: list[PreferencePair]) -> tuple:
    """Mean loss tensor over the batch's expanded terms, plus bookkeeping."""
    terms = []
    for pair in batch:
        logits = model.pair_logits(pair.query, list(pair.pos) + list(pair.neg))
        k_pos = torch.sigmoid(logits[0])
        k_neg = torch.sigmoid(logits[1:])
        terms.append(-torch.log(k_pos / (k_pos + k_neg)))
    flat = torch.cat(terms)
    return flat.mean(), float(flat.detach().double().sum()), flat.numel()


def train(pairs: list[PreferencePair], config: TrainConfig) -> TrainResult:
    """Fit the adapters and head on the pairs; returns per-epoch mean losses.

    Deterministic for a fixed (pairs, config): seeding covers model init and
    the per-epoch shuffle. Aborts on a non-finite loss.
    """
    config.validate()
    if len(pairs) < MIN_PAIRS:
        raise DataError(f"need at least {MIN_PAIRS} pairs to train, got {len(pairs)}")

    torch.manual_seed(config.seed)
    model = build_model(config)
    trainable = [p for p in model.parameters() if p.requires_grad]
    optimizer = torch.optim.AdamW(trainable, lr=config.learning_rate)

    curve = []
    for epoch in range(config.epochs):
        order = list(pairs)
        random.Random(config.seed * 100_003 + epoch).shuffle(order)
        epoch_sum, epoch_terms = 0.0, 0
        optimizer.zero_grad()
        micro_steps = 0
        for start in range(0, len(order), config.per_device_batch):
            batch = order[start : start + config.per_device_batch]
            with _autocast(config.precision):
                loss, term_sum, n_terms = _batch_loss(model, batch)
            loss_value = float(loss.detach())
            if not math.isfinite(loss_value):
                raise TrainingError(
                    f"non-finite loss {loss_value!r} at epoch {epoch}, pair offset {start}"
                )
            (loss / config.grad_accum).backward()
            micro_steps += 1
            if micro_steps % config.grad_accum == 0:
                optimizer.step()
                optimizer.zero_grad()
            epoch_sum += term_sum
            epoch_terms += n_terms
        if micro_steps % config.grad_accum:
            optimizer.step()
            optimizer.zero_grad()
        curve.append(epoch_sum / epoch_terms)
    model.eval()
    return TrainResult(model=model, loss_curve=curve)
