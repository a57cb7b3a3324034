"""Preference pair loading and synthetic suites.

The on-disk format is JSONL, one record per line:

    {"query": "...", "pos": ["one positive passage"], "neg": ["...", ...]}

Exactly one positive per record; at least one negative. Extra keys (scores,
prompts) are tolerated and ignored.
"""

from __future__ import annotations

import json
import random
from dataclasses import dataclass

from .errors import DataError


@dataclass(frozen=True)
class PreferencePair:
    query: str
    pos: tuple[str, ...]
    neg: tuple[str, ...]


def _pair_from_record(record: dict, where: str) -> PreferencePair:
    query = record.get("query")
    if not isinstance(query, str) or not query.strip():
        raise DataError(f"{where}: 'query' must be a non-empty string")
    pos = record.get("pos")
    if not isinstance(pos, list) or len(pos) != 1:
        raise DataError(f"{where}: 'pos' must hold exactly one passage")
    neg = record.get("neg")
    if not isinstance(neg, list) or not neg:
        raise DataError(f"{where}: 'neg' must hold at least one passage")
    for name, texts in (("pos", pos), ("neg", neg)):
        if not all(isinstance(t, str) and t.strip() for t in texts):
            raise DataError(f"{where}: '{name}' passages must be non-empty strings")
    return PreferencePair(query=query, pos=tuple(pos), neg=tuple(neg))


def load_prefs(path: str) -> list[PreferencePair]:
    """Read and validate a preference JSONL file."""
    try:
        with open(path, "r", encoding="utf-8") as handle:
            lines = handle.readlines()
    except OSError as exc:
        raise DataError(f"cannot read {path}: {exc}") from exc
    pairs = []
    for number, line in enumerate(lines, start=1):
        if not line.strip():
            continue
        where = f"{path}:{number}"
        try:
            record = json.loads(line)
        except json.JSONDecodeError as exc:
            raise DataError(f"{where}: invalid JSON: {exc}") from exc
        if not isinstance(record, dict):
            raise DataError(f"{where}: record must be an object")
        pairs.append(_pair_from_record(record, where))
    if not pairs:
        raise DataError(f"{path} holds no preference pairs")
    return pairs


def split_holdout(
    pairs: list[PreferencePair], fraction: float, seed: int
) -> tuple[list[PreferencePair], list[PreferencePair]]:
    """Seeded split into (train, holdout); holdout gets ceil(n*fraction)."""
    if not 0.0 < fraction < 1.0:
        raise DataError(f"holdout fraction must be in (0, 1), got {fraction}")
    order = list(pairs)
    random.Random(seed).shuffle(order)
    cut = max(1, round(len(order) * fraction))
    return order[cut:], order[:cut]


_TOPICS = [
    "revenue guidance", "credit facility", "dividend policy", "segment margin",
    "inventory reserve", "lease obligation", "tax provision", "share repurchase",
    "goodwill impairment", "hedging program",
]

_FILLER = [
    "weather patterns over the central plains", "the cafeteria renovation schedule",
    "employee parking assignments", "the annual charity bake sale",
    "office plant maintenance", "the softball league standings",
]


def make_separable_pairs(n: int, seed: int, n_neg: int = 4) -> list[PreferencePair]:
    """Synthetic pairs where positives share the query's topic words and
    negatives never do, so a scorer can learn to separate them."""
    rng = random.Random(seed)
    pairs = []
    for i in range(n):
        topic = _TOPICS[i % len(_TOPICS)]
        query = f"What changed in the {topic} during period {i}?"
        pos = f"The {topic} shifted materially in period {i} as disclosed in the filing."
        negs = tuple(
            f"Management also discussed {rng.choice(_FILLER)} in note {rng.randrange(99)}."
            for _ in range(n_neg)
        )
        pairs.append(PreferencePair(query=query, pos=(pos,), neg=negs))
    return pairs
