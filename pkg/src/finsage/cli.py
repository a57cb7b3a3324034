"""Command-line interface.

Exit codes: 0 success, 2 configuration or argument error, 3 store error,
4 model client error, 5 input data error. Failures print one JSON object
to stderr with a machine-readable error code.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from datetime import date

from .chunks import read_jsonl, write_jsonl
from .clients import build_clients
from .config import EngineConfig, load_config
from .errors import ConfigError, FinSageError, InputDataError
from .evaluation import evaluate_rerank, evaluate_retrieval, load_eval_queries, report_to_json
from .ingest import ingest_document, parse_content_list
from .rerank import build_preference_dataset, rerank, write_preference_jsonl
from .retrieval import retrieve
from .service import QueryService
from .store import ChunkStore


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="finsage", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p: argparse.ArgumentParser) -> None:
        p.add_argument("--config", help="YAML config file")

    p_ingest = sub.add_parser("ingest", help="preprocess content lists into a chunk file")
    common(p_ingest)
    p_ingest.add_argument("inputs", nargs="+", help="content_list JSON files")
    p_ingest.add_argument("--doc-id", help="document id (single input only; default: file stem)")
    p_ingest.add_argument("--pub-date", help="ISO publication date applied to all inputs")
    p_ingest.add_argument("--out", default="chunks.jsonl", help="output chunk JSONL path")

    p_index = sub.add_parser("index", help="build a searchable store from a chunk file")
    common(p_index)
    p_index.add_argument("--chunks", required=True, help="chunk JSONL from ingest")
    p_index.add_argument("--out", help="store directory (default: config store_path)")

    p_retrieve = sub.add_parser("retrieve", help="multi-path retrieval for one query")
    common(p_retrieve)
    p_retrieve.add_argument("--query", required=True)
    p_retrieve.add_argument("--history", action="append", default=[], help="prior turn (repeatable)")
    p_retrieve.add_argument("--trace", help="write the trace JSON here instead of stdout")

    p_rerank = sub.add_parser("rerank", help="retrieve plus cross-encoder re-ranking")
    common(p_rerank)
    p_rerank.add_argument("--query", required=True)
    p_rerank.add_argument("--history", action="append", default=[])
    p_rerank.add_argument("--k", type=int, help="override rerank.k")

    p_eval = sub.add_parser("eval", help="evaluate annotated queries against the store")
    common(p_eval)
    p_eval.add_argument("--queries", required=True, help="eval query JSONL")
    p_eval.add_argument("--mode", choices=("retrieval", "rerank"), default="retrieval")
    p_eval.add_argument("--out", help="write the report here instead of stdout")

    p_prefs = sub.add_parser("build-prefs", help="mine preference pairs for trainer consumption")
    common(p_prefs)
    p_prefs.add_argument("--queries", required=True, help="eval query JSONL")
    p_prefs.add_argument("--ratio", type=int, default=4, help="negatives per positive")
    p_prefs.add_argument("--seed", type=int, help="override config seed for sampling")
    p_prefs.add_argument("--out", required=True, help="output preference JSONL")

    p_serve = sub.add_parser("serve", help="HTTP retrieval service")
    common(p_serve)
    p_serve.add_argument("--host", default="127.0.0.1")
    p_serve.add_argument("--port", type=int, default=8080)

    return parser


def _load_store(config: EngineConfig) -> ChunkStore:
    return ChunkStore.load(config.store_path)


def _default_doc_id(path: str) -> str:
    stem = os.path.splitext(os.path.basename(path))[0]
    if stem.endswith("_content_list"):
        stem = stem[: -len("_content_list")]
    return stem


def _cmd_ingest(args, config: EngineConfig) -> int:
    if args.doc_id and len(args.inputs) > 1:
        raise ConfigError("bad-arguments", "--doc-id only applies to a single input file")
    pub_date = None
    if args.pub_date:
        try:
            pub_date = date.fromisoformat(args.pub_date)
        except ValueError as exc:
            raise ConfigError("bad-date", f"--pub-date: {exc}") from exc
    clients = build_clients(config.clients)
    collected = ChunkStore(k1=config.index_k1, b=config.index_b)
    documents = []
    for path in args.inputs:
        try:
            with open(path, "r", encoding="utf-8") as handle:
                data = handle.read()
        except OSError as exc:
            raise InputDataError("missing-file", f"cannot read {path}: {exc}") from exc
        blocks = parse_content_list(data, source=path)
        document_id = args.doc_id or _default_doc_id(path)
        result = ingest_document(blocks, document_id, pub_date, clients, config.ingest)
        collected.upsert_chunks(result.chunks)
        documents.append(
            {
                "document_id": document_id,
                "chunks": len(result.chunks),
                "segments": len(result.segments),
                "dropped_duplicates": result.dropped_duplicates,
                "notes": result.notes,
            }
        )
    count = write_jsonl(collected.all_chunks(), args.out)
    print(json.dumps({"chunks_written": count, "out": args.out, "documents": documents}, ensure_ascii=False))
    return 0


def _cmd_index(args, config: EngineConfig) -> int:
    store = ChunkStore(k1=config.index_k1, b=config.index_b)
    store.upsert_chunks(read_jsonl(args.chunks))
    out = args.out or config.store_path
    store.save(out)
    manifest = store.manifest()
    print(json.dumps({"store": out, "manifest": manifest}, ensure_ascii=False))
    return 0


def _cmd_retrieve(args, config: EngineConfig) -> int:
    store = _load_store(config)
    clients = build_clients(config.clients)
    trace = retrieve(args.query, args.history, store, clients, config.retrieval)
    body = json.dumps({"query": args.query, **trace.to_json_dict()}, ensure_ascii=False, indent=2) + "\n"
    if args.trace:
        with open(args.trace, "w", encoding="utf-8") as handle:
            handle.write(body)
        print(json.dumps({"trace": args.trace, "sub_queries": len(trace.sub_results)}))
    else:
        sys.stdout.write(body)
    return 0


def _cmd_rerank(args, config: EngineConfig) -> int:
    store = _load_store(config)
    clients = build_clients(config.clients)
    settings = config.rerank
    if args.k is not None:
        if args.k < 1:
            raise ConfigError("bad-k", "--k must be >= 1")
        settings = type(settings)(k=args.k, beta=settings.beta, query_time=settings.query_time)
    trace = retrieve(args.query, args.history, store, clients, config.retrieval)
    top, notes = rerank(args.query, trace, store, clients, settings)
    body = {
        "query": args.query,
        "plan": trace.plan.to_json_dict(),
        "results": [
            {"rank": rank, **unit.to_json_dict()} for rank, unit in enumerate(top, start=1)
        ],
        "notes": notes,
    }
    sys.stdout.write(json.dumps(body, ensure_ascii=False, indent=2) + "\n")
    return 0


def _cmd_eval(args, config: EngineConfig) -> int:
    store = _load_store(config)
    clients = build_clients(config.clients)
    queries = load_eval_queries(args.queries)
    if args.mode == "retrieval":
        report = evaluate_retrieval(queries, store, clients, config.retrieval)
    else:
        report = evaluate_rerank(queries, store, clients, config.retrieval, config.rerank)
    report = {"config": config.snapshot(), **report}
    body = report_to_json(report)
    if args.out:
        with open(args.out, "w", encoding="utf-8") as handle:
            handle.write(body)
        print(json.dumps({"report": args.out, "mode": args.mode, "num_queries": len(queries)}))
    else:
        sys.stdout.write(body)
    return 0


def _cmd_build_prefs(args, config: EngineConfig) -> int:
    if args.ratio < 1:
        raise ConfigError("bad-ratio", "--ratio must be >= 1")
    store = _load_store(config)
    clients = build_clients(config.clients)
    queries = load_eval_queries(args.queries)
    traces = {
        q.query_id: retrieve(q.query, [], store, clients, config.retrieval) for q in queries
    }
    seed = args.seed if args.seed is not None else config.seed
    pairs, notes = build_preference_dataset(queries, traces, store, args.ratio, seed)
    count = write_preference_jsonl(pairs, args.out)
    print(json.dumps({"pairs_written": count, "out": args.out, "notes": notes}, ensure_ascii=False))
    return 0


def _cmd_serve(args, config: EngineConfig) -> int:
    store = _load_store(config)
    clients = build_clients(config.clients)
    service = QueryService(config, store, clients, host=args.host, port=args.port)
    print(json.dumps({"serving": service.endpoint, "chunks": len(store)}), flush=True)
    service.serve_forever()
    return 0


_COMMANDS = {
    "ingest": _cmd_ingest,
    "index": _cmd_index,
    "retrieve": _cmd_retrieve,
    "rerank": _cmd_rerank,
    "eval": _cmd_eval,
    "build-prefs": _cmd_build_prefs,
    "serve": _cmd_serve,
}


def main(argv: list[str] | None = None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    try:
        config = load_config(args.config)
        return _COMMANDS[args.command](args, config)
    except FinSageError as exc:
        sys.stderr.write(json.dumps(exc.to_json_dict(), ensure_ascii=False) + "\n")
        return exc.exit_code


if __name__ == "__main__":
    sys.exit(main())
