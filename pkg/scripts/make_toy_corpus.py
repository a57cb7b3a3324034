"""Regenerate the bundled toy corpus under data/toy/.

Three small filings exercise every pipeline stage: headings, tables,
images, repeated boilerplate (dedup), pronouns (coref), and a paragraph
shared verbatim between two filing years (replacement on re-ingest).

The suite of annotated queries in the tests leans on chunks with
deliberately disjoint signals:

* the "Docket QZX917" chunk is findable only by exact-term match
* the "Refinanced obligation timetables" chunk shares character shapes
  with its query but not a single whole token
* the "Dividend Policy" segment hides a numbers-only chunk that only the
  segment-metadata path can reach

Run from the repository root: python3 scripts/make_toy_corpus.py
"""

from __future__ import annotations

import json
import os

OUT_DIR = os.path.join(os.path.dirname(os.path.dirname(os.path.abspath(__file__))), "data", "toy")

DISCLAIMER = (
    "This report contains forward-looking statements that involve substantial risks and "
    "uncertainties; actual outcomes may differ materially from current expectations."
)

SHARED_RECURRING = (
    "Annual recurring revenue reached a record level as the subscription mix improved and "
    "churn declined across enterprise accounts."
)

ACME_2024 = [
    {"type": "text", "text": "Business Overview", "text_level": 1, "page_idx": 0},
    {
        "type": "text",
        "text": (
            "Acme Corporation designs industrial automation platforms serving manufacturing, "
            "logistics, and energy customers worldwide. The installed base expanded again this "
            "year, anchored by long-term service agreements. Gross margin widened on software "
            "attach rates, while hardware pricing stayed disciplined despite component inflation."
        ),
        "page_idx": 0,
    },
    {"type": "image", "img_path": "images/acme_org.png", "text": "", "page_idx": 0},
    {"type": "text", "text": "Management Discussion and Analysis", "text_level": 1, "page_idx": 1},
    {
        "type": "text",
        "text": (
            "Consolidated revenue rose fourteen percent to a new high on volume gains in every "
            "region. It reflects broad-based demand rather than pricing actions. Operating "
            "expenses grew slower than revenue, and we converted a record share of operating "
            "income into free cash flow during the year."
        ),
        "page_idx": 1,
    },
    {"type": "table", "img_path": "images/acme_rev_table.png", "text": "", "page_idx": 1},
    {
        "type": "text",
        "text": (
            "Segment operating margin improved in automation and logistics while energy held "
            "steady. Backlog coverage entering next year remains above the five-year average."
        ),
        "page_idx": 2,
    },
    {"type": "text", "text": "Recurring Revenue", "text_level": 1, "page_idx": 2},
    {"type": "text", "text": SHARED_RECURRING, "page_idx": 2},
    {"type": "text", "text": "Forward-Looking Statements", "text_level": 1, "page_idx": 3},
    {"type": "text", "text": DISCLAIMER, "page_idx": 3},
    {"type": "text", "text": "Legal Proceedings", "text_level": 1, "page_idx": 4},
    {
        "type": "text",
        "text": (
            "Docket QZX917 remains pending before the arbitration tribunal; counsel catalogued "
            "4,812 exhibits while 9,307 related filings were archived awaiting review."
        ),
        "page_idx": 4,
    },
    {"type": "text", "text": "Debt Maturities", "text_level": 1, "page_idx": 5},
    {
        "type": "text",
        "text": "Refinanced obligation timetables consolidate under the amended revolver.",
        "page_idx": 5,
    },
    {"type": "text", "text": "Dividend Policy", "text_level": 1, "page_idx": 6},
    {
        "type": "text",
        "text": (
            "Dividends are declared quarterly at roughly a third of free cash flow, subject to "
            "board approval and to statutory surplus tests under applicable corporate law."
        ),
        "page_idx": 6,
    },
    {
        "type": "text",
        "text": (
            "Record dates fall on March 15, June 14, September 13, and December 12; ex-dates "
            "precede each record date by one business session."
        ),
        "page_idx": 6,
    },
    {"type": "text", "text": "Risk Factors", "text_level": 1, "page_idx": 7},
    {
        "type": "text",
        "text": (
            "Customer concentration, supply interruptions, and currency swings could pressure "
            "results. Cybersecurity incidents may disrupt operations or expose confidential "
            "information, and remediation costs could be significant in any given period."
        ),
        "page_idx": 7,
    },
    {"type": "text", "text": DISCLAIMER, "page_idx": 8},
    {"type": "text", "text": "Deferred Revenue", "text_level": 1, "page_idx": 8},
    {
        "type": "text",
        "text": "Deferred revenue balances expanded alongside commitments in alpha cycles.",
        "page_idx": 8,
    },
]

ACME_2023 = [
    {"type": "text", "text": "Business Overview", "text_level": 1, "page_idx": 0},
    {
        "type": "text",
        "text": (
            "Acme Corporation builds industrial automation platforms for manufacturing and "
            "logistics customers. Service attach rates climbed through the year while the "
            "installed base grew modestly against a soft capital spending backdrop."
        ),
        "page_idx": 0,
    },
    {"type": "text", "text": "Recurring Revenue", "text_level": 1, "page_idx": 1},
    {"type": "text", "text": SHARED_RECURRING, "page_idx": 1},
    {"type": "text", "text": "Cost Structure", "text_level": 1, "page_idx": 2},
    {
        "type": "text",
        "text": (
            "Input costs eased through the second half as freight normalized. Productivity "
            "programs funded incremental research spending without diluting operating margin, "
            "and headcount ended the year roughly flat."
        ),
        "page_idx": 2,
    },
    {"type": "text", "text": "Deferred Revenue", "text_level": 1, "page_idx": 3},
    {
        "type": "text",
        "text": "Deferred revenue balances expanded alongside commitments in omega cycles.",
        "page_idx": 3,
    },
    {"type": "text", "text": "Liquidity", "text_level": 1, "page_idx": 4},
    {
        "type": "text",
        "text": (
            "Cash and equivalents cover near-term maturities twice over. The undrawn revolver "
            "provides additional headroom, and covenant ratios retain ample cushion under the "
            "most restrictive test."
        ),
        "page_idx": 4,
    },
]

BOLT_2024 = [
    {"type": "text", "text": "Business Overview", "text_level": 1, "page_idx": 0},
    {
        "type": "text",
        "text": (
            "Bolt Industries fabricates precision fasteners and structural hardware for "
            "aerospace and heavy equipment manufacturers. Volumes recovered steadily as "
            "aircraft build rates normalized through the year."
        ),
        "page_idx": 0,
    },
    {"type": "text", "text": "Supply Chain", "text_level": 1, "page_idx": 1},
    {
        "type": "text",
        "text": (
            "Dual sourcing now covers the majority of critical alloys. Lead times shortened "
            "each quarter, and buffer inventory unwound toward historical norms without "
            "service-level slippage."
        ),
        "page_idx": 1,
    },
    {"type": "text", "text": "Capital Expenditures", "text_level": 1, "page_idx": 2},
    {
        "type": "text",
        "text": (
            "Spending concentrated on forging capacity and automated inspection cells. The "
            "new lines commission next spring and should lift throughput without adding "
            "headcount to the plants."
        ),
        "page_idx": 2,
    },
    {"type": "text", "text": "Tax Matters", "text_level": 1, "page_idx": 3},
    {
        "type": "text",
        "text": (
            "The effective rate benefited from research credits and a favorable audit "
            "settlement. No material uncertain positions were added, and cash taxes tracked "
            "the statutory blend closely."
        ),
        "page_idx": 3,
    },
    {"type": "text", "text": "Employee Matters", "text_level": 1, "page_idx": 4},
    {
        "type": "text",
        "text": (
            "Voluntary turnover fell to the lowest level in five years. Apprenticeship "
            "cohorts doubled, and safety recordables declined for the third consecutive "
            "year across all sites."
        ),
        "page_idx": 4,
    },
]

CONFIG_YAML = """\
store_path: store
seed: 7
ingest:
  tau_dedup: 0.7
  coref_k: 4
  segment_budget: 200
  segment_budget_unit: characters
index:
  k1: 1.5
  b: 0.75
retrieval:
  k_dense: 3
  k_bm25: 3
  k_meta: 1
  k_hyde: 3
  hyde_hypotheses: 3
  tau_expand: 0.85
  bundle_limit: 5
  rerank_units: bundles
rerank:
  k: 5
  beta: 0.1
  query_time: 2024-09-30
clients:
  embedder: {kind: stub}
  generator: {kind: stub}
  cross_encoder: {kind: stub}
"""

DOCS = {
    "acme_2024_content_list.json": ACME_2024,
    "acme_2023_content_list.json": ACME_2023,
    "bolt_2024_content_list.json": BOLT_2024,
}


def main() -> None:
    os.makedirs(OUT_DIR, exist_ok=True)
    for name, blocks in DOCS.items():
        path = os.path.join(OUT_DIR, name)
        with open(path, "w", encoding="utf-8") as handle:
            json.dump(blocks, handle, ensure_ascii=False, indent=2)
            handle.write("\n")
        print(f"wrote {path} ({len(blocks)} blocks)")
    config_path = os.path.join(OUT_DIR, "config.yaml")
    with open(config_path, "w", encoding="utf-8") as handle:
        handle.write(CONFIG_YAML)
    print(f"wrote {config_path}")


if __name__ == "__main__":
    main()
