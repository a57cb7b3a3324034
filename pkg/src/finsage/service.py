"""Query HTTP service: health check plus retrieve-and-rerank over a loaded store."""

from __future__ import annotations

import json
import threading
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer

from .clients import ClientBundle
from .config import EngineConfig
from .errors import FinSageError
from .rerank import rerank
from .retrieval import retrieve
from .store import ChunkStore


class QueryService:
    """Serves GET /healthz and POST /retrieve for one store snapshot."""

    def __init__(
        self,
        config: EngineConfig,
        store: ChunkStore,
        clients: ClientBundle,
        host: str = "127.0.0.1",
        port: int = 0,
    ) -> None:
        self._config = config
        self._store = store
        self._clients = clients

        service = self

        class Handler(BaseHTTPRequestHandler):
            def log_message(self, *args) -> None:
                pass

            def do_GET(self) -> None:
                if self.path == "/healthz":
                    _respond(self, 200, {"status": "ok", "chunks": len(service._store)})
                else:
                    _respond(self, 404, {"error": {"code": "not-found", "message": self.path}})

            def do_POST(self) -> None:
                if self.path != "/retrieve":
                    _respond(self, 404, {"error": {"code": "not-found", "message": self.path}})
                    return
                length = int(self.headers.get("Content-Length", 0))
                try:
                    payload = json.loads(self.rfile.read(length) or b"")
                except json.JSONDecodeError as exc:
                    _respond(self, 400, {"error": {"code": "bad-request", "message": f"invalid JSON: {exc}"}})
                    return
                if not isinstance(payload, dict) or not isinstance(payload.get("query"), str):
                    _respond(self, 400, {"error": {"code": "bad-request", "message": "body needs a string 'query'"}})
                    return
                try:
                    body = service._answer(payload)
                except FinSageError as exc:
                    _respond(self, 500, exc.to_json_dict())
                    return
                _respond(self, 200, body)

        self._httpd = ThreadingHTTPServer((host, port), Handler)
        self._thread = threading.Thread(target=self._httpd.serve_forever, daemon=True)

    def _answer(self, payload: dict) -> dict:
        query = payload["query"]
        history = payload.get("history") or []
        if not isinstance(history, list) or not all(isinstance(h, str) for h in history):
            history = []
        trace = retrieve(query, history, self._store, self._clients, self._config.retrieval)
        settings = self._config.rerank
        if isinstance(payload.get("k"), int) and payload["k"] >= 1:
            settings = type(settings)(
                k=payload["k"], beta=settings.beta, query_time=settings.query_time
            )
        top, notes = rerank(query, trace, self._store, self._clients, settings)
        return {
            "query": query,
            "plan": trace.plan.to_json_dict(),
            "results": [
                {
                    "rank": rank,
                    "final_score": unit.final_score,
                    "raw_logit": unit.raw_logit,
                    "time_bonus": unit.time_bonus,
                    "seed_chunk_id": unit.unit_id,
                    "member_ids": list(unit.member_ids),
                    "paths": list(unit.paths),
                    "text": unit.text,
                }
                for rank, unit in enumerate(top, start=1)
            ],
            "notes": notes,
        }

    @property
    def port(self) -> int:
        return self._httpd.server_address[1]

    @property
    def endpoint(self) -> str:
        host, port = self._httpd.server_address[:2]
        return f"http://{host}:{port}"

    def start(self) -> "QueryService":
        self._thread.start()
        return self

    def stop(self) -> None:
        self._httpd.shutdown()
        self._httpd.server_close()
        self._thread.join(timeout=5)

    def serve_forever(self) -> None:
        """Run in the calling thread until interrupted."""
        try:
            self._httpd.serve_forever()
        finally:
            self._httpd.server_close()


def _respond(request: BaseHTTPRequestHandler, status: int, body: dict) -> None:
    data = json.dumps(body, ensure_ascii=False).encode("utf-8")
    request.send_response(status)
    request.send_header("Content-Type", "application/json; charset=utf-8")
    request.send_header("Content-Length", str(len(data)))
    request.end_headers()
    request.wfile.write(data)
