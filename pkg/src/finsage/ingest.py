"""Document preprocessing: parsed blocks to retrievable chunks.

The pipeline for one filing runs in a fixed order:

1. parse the layout-analysis block list (text, table, image blocks)
2. textualize tables and images into narrative text via the generator
3. group blocks into semantic segments under their headings
4. split each segment into budgeted chunk drafts at sentence boundaries
5. drop near-duplicate drafts (TF-IDF cosine against already-kept drafts)
6. resolve pronouns per draft using preceding drafts of the same segment
7. summarize each segment for the metadata channel
8. assemble chunks: embeddings, sparse terms, ids, neighbor links

Neighbor links are created last, after dedup, so they never point at a
dropped draft.
"""

from __future__ import annotations

import json
import re
from collections import Counter
from dataclasses import dataclass, replace
from datetime import date

import numpy as np

from .chunks import Chunk, chunk_id_for
from .clients import ClientBundle, Generator
from .errors import ClientError, ConfigError, InputDataError
from .textutil import sentence_spans, tokenize

BLOCK_TYPES = ("text", "table", "image")

# Pronouns that trigger coreference resolution, incl. possessive forms.
_PRONOUN_RE = re.compile(
    r"\b(?:he|she|it|they|we|this|these|those"
    r"|his|her|hers|its|their|theirs|our|ours)\b",
    re.IGNORECASE,
)


@dataclass
class RawBlock:
    """One block of the upstream layout analysis."""

    block_type: str  # "text" | "table" | "image"
    text: str
    text_level: int | None
    page_idx: int
    img_path: str | None

    @property
    def is_heading(self) -> bool:
        return self.text_level is not None


@dataclass
class SemanticSegment:
    """A heading-delimited span of a document; carries the metadata channel."""

    segment_id: str
    document_id: str
    title: str
    title_summary: str = ""


@dataclass
class ChunkDraft:
    """Chunk text before embedding, with its provenance."""

    text: str
    segment_id: str
    document_id: str
    page_start: int
    page_end: int
    publication_date: date | None


def parse_content_list(data: str | bytes, source: str = "<content_list>") -> list[RawBlock]:
    """Parse and validate a layout-analysis JSON array into blocks.

    Every schema violation names the offending block index so bad exports
    are diagnosable without opening the file.
    """
    try:
        raw = json.loads(data)
    except json.JSONDecodeError as exc:
        raise InputDataError("bad-content-list", f"{source}: invalid JSON: {exc}", source=source) from exc
    if not isinstance(raw, list):
        raise InputDataError("bad-content-list", f"{source}: top level must be an array", source=source)
    blocks = []
    for index, item in enumerate(raw):
        def bad(reason: str) -> InputDataError:
            return InputDataError(
                "bad-content-list", f"{source}: block {index}: {reason}", source=source, block=index
            )

        if not isinstance(item, dict):
            raise bad("not an object")
        block_type = item.get("type")
        if block_type not in BLOCK_TYPES:
            raise bad(f"unknown type {block_type!r}")
        text = item.get("text", "")
        if not isinstance(text, str):
            raise bad("text must be a string")
        text_level = item.get("text_level")
        if text_level is not None and (not isinstance(text_level, int) or text_level < 1):
            raise bad(f"text_level must be a positive integer, got {text_level!r}")
        page_idx = item.get("page_idx", 0)
        if not isinstance(page_idx, int) or page_idx < 0:
            raise bad(f"page_idx must be a non-negative integer, got {page_idx!r}")
        img_path = item.get("img_path")
        if img_path is not None and not isinstance(img_path, str):
            raise bad("img_path must be a string")
        if block_type == "text" and img_path:
            raise bad("text blocks must not carry img_path")
        blocks.append(
            RawBlock(
                block_type=block_type,
                text=text,
                text_level=text_level,
                page_idx=page_idx,
                img_path=img_path,
            )
        )
    return blocks


def textualize_blocks(blocks: list[RawBlock], generator: Generator) -> list[str]:
    """Narrative text for every block; tables and images go through the generator.

    Context passed to the generator is the immediately preceding and
    succeeding block's text. A failed or empty generation is an error naming
    the source (retries happen inside the client).
    """
    texts: list[str] = []
    for i, block in enumerate(blocks):
        if block.block_type == "text":
            texts.append(block.text)
            continue
        before = blocks[i - 1].text if i > 0 else ""
        after = blocks[i + 1].text if i + 1 < len(blocks) else ""
        source = block.img_path or f"<{block.block_type} block {i}>"
        prompt = f"{block.block_type}|{block.img_path or ''}"
        context = [c for c in (before, after) if c]
        try:
            generated = generator.generate_texts("textualize", prompt, 1, context=context)[0]
        except ClientError as exc:
            raise ClientError(
                "textualize-failed", f"textualization failed for {source}: {exc.message}", source=source
            ) from exc
        if not generated.strip():
            raise ClientError("textualize-failed", f"empty textualization for {source}", source=source)
        texts.append(generated)
    return texts


def group_segments(
    blocks: list[RawBlock], document_id: str
) -> list[tuple[SemanticSegment, list[int]]]:
    """Partition blocks into heading-delimited segments.

    A block with text_level set starts a new segment and becomes its title;
    content before the first heading lands in an untitled segment. Heading
    blocks themselves contribute no content.
    """
    groups: list[tuple[str, list[int]]] = []
    current_title = ""
    current_members: list[int] = []
    opened = False
    for i, block in enumerate(blocks):
        if block.is_heading:
            if opened or current_members:
                groups.append((current_title, current_members))
            current_title = block.text.strip()
            current_members = []
            opened = True
        else:
            current_members.append(i)
    if opened or current_members:
        groups.append((current_title, current_members))
    out = []
    for index, (title, members) in enumerate(groups):
        segment = SemanticSegment(
            segment_id=f"{document_id}/s{index:04d}",
            document_id=document_id,
            title=title,
        )
        out.append((segment, members))
    return out


def _measure(text: str, unit: str) -> int:
    if unit == "characters":
        return len(text)
    if unit == "tokens":
        return len(text.split())
    raise ConfigError("bad-budget-unit", f"unknown budget unit {unit!r}")


def _close_draft(
    pieces: list[tuple[str, int]], budget: int, unit: str
) -> tuple[tuple[str, int, int], list[tuple[str, int]]]:
    """Split accumulated pieces into one within-budget draft plus the carry.

    Trailing sentences move to the carry until the retained front fits the
    budget; a single sentence that alone exceeds the budget stays intact.
    """
    joined = " ".join(text for text, _ in pieces)
    offsets = []
    pos = 0
    for text, page in pieces:
        offsets.append((pos, pos + len(text), page))
        pos += len(text) + 1
    spans = sentence_spans(joined)
    cut = len(spans)
    while cut > 1 and _measure(joined[: spans[cut - 1][1]], unit) > budget:
        cut -= 1
    if cut == len(spans):
        pages = [page for _, _, page in offsets]
        return (joined, min(pages), max(pages)), []
    retained_end = spans[cut - 1][1]
    carry_start = spans[cut][0]
    retained_pages = [page for start, _, page in offsets if start < retained_end]
    draft = (joined[:retained_end], min(retained_pages), max(retained_pages))
    carry = []
    for start, end, page in offsets:
        if end > carry_start:
            portion = joined[max(start, carry_start) : end].strip()
            if portion:
                carry.append((portion, page))
    return draft, carry


def segment_text(
    pieces: list[tuple[str, int]], budget: int, unit: str = "characters"
) -> list[tuple[str, int, int]]:
    """Pack (text, page) pieces into budgeted drafts: (text, page_start, page_end).

    Pieces merge greedily; once the running text exceeds the budget, a draft
    closes at the latest sentence boundary that fits and the tail seeds the
    next draft. No text is lost and piece order is preserved.
    """
    if budget < 1:
        raise ConfigError("bad-budget", "segment budget must be >= 1")
    work = [(text.strip(), page) for text, page in pieces if text.strip()]
    drafts: list[tuple[str, int, int]] = []
    current: list[tuple[str, int]] = []
    for piece in work:
        current.append(piece)
        while current and _measure(" ".join(t for t, _ in current), unit) > budget:
            draft, current = _close_draft(current, budget, unit)
            drafts.append(draft)
    if current:
        joined = " ".join(t for t, _ in current)
        pages = [page for _, page in current]
        drafts.append((joined, min(pages), max(pages)))
    return drafts


def dedup_near(drafts: list[ChunkDraft], threshold: float) -> tuple[list[ChunkDraft], int]:
    """Drop drafts whose TF-IDF cosine to an already-kept draft reaches the threshold.

    The earlier draft always survives. Identical texts are dropped outright,
    so a threshold of 1.0 removes exactly the literal duplicates.
    """
    if not 0.0 < threshold <= 1.0:
        raise ConfigError("bad-threshold", f"dedup threshold must be in (0, 1], got {threshold}")
    if not drafts:
        return [], 0
    token_lists = [tokenize(d.text) for d in drafts]
    vocab: dict[str, int] = {}
    for tokens in token_lists:
        for term in tokens:
            vocab.setdefault(term, len(vocab))
    n = len(drafts)
    tf = np.zeros((n, max(len(vocab), 1)), dtype=np.float64)
    for row, tokens in enumerate(token_lists):
        for term, count in Counter(tokens).items():
            tf[row, vocab[term]] = count
    df = np.count_nonzero(tf, axis=0)
    idf = np.log((1.0 + n) / (1.0 + df)) + 1.0
    weighted = tf * idf
    norms = np.linalg.norm(weighted, axis=1)
    nonzero = norms > 0
    weighted[nonzero] /= norms[nonzero, None]

    kept: list[int] = []
    kept_texts: set[str] = set()
    dropped = 0
    for i in range(n):
        if drafts[i].text in kept_texts:
            dropped += 1
            continue
        sims = weighted[kept] @ weighted[i] if kept else np.zeros(0)
        if sims.size and float(sims.max()) >= threshold:
            dropped += 1
            continue
        kept.append(i)
        kept_texts.add(drafts[i].text)
    return [drafts[i] for i in kept], dropped


def resolve_coreferences(
    drafts: list[ChunkDraft], coref_k: int, generator: Generator
) -> tuple[list[ChunkDraft], list[str]]:
    """Rewrite pronoun-bearing drafts with preceding same-segment drafts as context.

    ``drafts`` must belong to one segment, in reading order. Context is the
    up-to-``coref_k`` immediately preceding drafts, already resolved. Client
    failure keeps the original text and records a note.
    """
    out: list[ChunkDraft] = []
    notes: list[str] = []
    for i, draft in enumerate(drafts):
        if _PRONOUN_RE.search(draft.text):
            context = [d.text for d in out[max(0, i - coref_k) : i]]
            try:
                resolved = generator.generate_texts("coref", draft.text, 1, context=context)[0]
            except ClientError as exc:
                notes.append(f"coref skipped for draft {i} in {draft.segment_id}: {exc.message}")
            else:
                if resolved.strip():
                    draft = replace(draft, text=resolved)
                else:
                    notes.append(f"coref returned empty text for draft {i} in {draft.segment_id}")
        out.append(draft)
    return out, notes


def summarize_sections(
    segments: list[SemanticSegment],
    drafts_by_segment: dict[str, list[ChunkDraft]],
    generator: Generator,
) -> list[str]:
    """Fill title_summary for each segment from its draft texts.

    Falls back to the bare title when the segment is empty or the client
    fails; returns notes for degraded segments.
    """
    notes: list[str] = []
    for segment in segments:
        content = " ".join(d.text for d in drafts_by_segment.get(segment.segment_id, []))
        if not content.strip():
            segment.title_summary = segment.title
            continue
        try:
            summary = generator.generate_texts("summarize", content, 1)[0]
        except ClientError as exc:
            segment.title_summary = segment.title
            notes.append(f"summary degraded to title for {segment.segment_id}: {exc.message}")
            continue
        segment.title_summary = summary if summary.strip() else segment.title
    return notes


def build_chunks(
    drafts: list[ChunkDraft],
    segments: list[SemanticSegment],
    embedder,
) -> list[Chunk]:
    """Embed drafts and assemble linked chunks.

    Dense vectors embed the refined text; the metadata vector embeds
    "title title_summary" and is shared by all chunks of a segment.
    prev/next ids chain consecutive drafts of the same document.
    """
    if not drafts:
        return []
    segment_lookup = {s.segment_id: s for s in segments}
    texts = [d.text for d in drafts]
    dense = embedder.embed_texts(texts)

    meta_order: list[str] = []
    for draft in drafts:
        if draft.segment_id not in meta_order:
            meta_order.append(draft.segment_id)
    meta_texts = []
    for segment_id in meta_order:
        segment = segment_lookup[segment_id]
        meta_texts.append(f"{segment.title} {segment.title_summary}")
    meta_dense = embedder.embed_texts(meta_texts)
    meta_by_segment = {sid: meta_dense[i] for i, sid in enumerate(meta_order)}

    ids = [chunk_id_for(t) for t in texts]
    chunks: list[Chunk] = []
    for i, draft in enumerate(drafts):
        segment = segment_lookup[draft.segment_id]
        prev_id = ids[i - 1] if i > 0 and drafts[i - 1].document_id == draft.document_id else None
        next_id = (
            ids[i + 1]
            if i + 1 < len(drafts) and drafts[i + 1].document_id == draft.document_id
            else None
        )
        chunk = Chunk(
            chunk_id=ids[i],
            text=draft.text,
            title=segment.title,
            title_summary=segment.title_summary,
            document_id=draft.document_id,
            page_start=draft.page_start,
            page_end=draft.page_end,
            publication_date=draft.publication_date,
            segment_id=draft.segment_id,
            prev_id=prev_id,
            next_id=next_id,
            dense=dense[i],
            sparse=dict(Counter(tokenize(draft.text))),
            meta_dense=meta_by_segment[draft.segment_id],
        )
        chunk.validate()
        chunks.append(chunk)
    return chunks


@dataclass
class IngestSettings:
    tau_dedup: float = 0.7
    coref_k: int = 4
    segment_budget: int = 200
    segment_budget_unit: str = "characters"


@dataclass
class IngestResult:
    chunks: list[Chunk]
    segments: list[SemanticSegment]
    notes: list[str]
    dropped_duplicates: int


def ingest_document(
    blocks: list[RawBlock],
    document_id: str,
    publication_date: date | None,
    clients: ClientBundle,
    settings: IngestSettings,
) -> IngestResult:
    """Run the full preprocessing pipeline for one document."""
    block_texts = textualize_blocks(blocks, clients.generator)
    grouped = group_segments(blocks, document_id)
    segments = [segment for segment, _ in grouped]

    drafts: list[ChunkDraft] = []
    for segment, members in grouped:
        pieces = [(block_texts[i], blocks[i].page_idx) for i in members]
        for text, page_start, page_end in segment_text(
            pieces, settings.segment_budget, settings.segment_budget_unit
        ):
            drafts.append(
                ChunkDraft(
                    text=text,
                    segment_id=segment.segment_id,
                    document_id=document_id,
                    page_start=page_start,
                    page_end=page_end,
                    publication_date=publication_date,
                )
            )

    survivors, dropped = dedup_near(drafts, settings.tau_dedup)

    notes: list[str] = []
    by_segment: dict[str, list[ChunkDraft]] = {}
    for draft in survivors:
        by_segment.setdefault(draft.segment_id, []).append(draft)
    resolved: list[ChunkDraft] = []
    resolved_by_segment: dict[str, list[ChunkDraft]] = {}
    for segment in segments:
        segment_drafts = by_segment.get(segment.segment_id, [])
        if not segment_drafts:
            continue
        fixed, coref_notes = resolve_coreferences(segment_drafts, settings.coref_k, clients.generator)
        notes.extend(coref_notes)
        resolved.extend(fixed)
        resolved_by_segment[segment.segment_id] = fixed

    notes.extend(summarize_sections(segments, resolved_by_segment, clients.generator))
    chunks = build_chunks(resolved, segments, clients.embedder)
    return IngestResult(chunks=chunks, segments=segments, notes=notes, dropped_duplicates=dropped)
