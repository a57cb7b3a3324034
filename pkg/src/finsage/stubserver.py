"""HTTP front for the stub model clients.

Serves the wire protocol consumed by the HTTP clients (POST /embed,
/generate, /score) with the deterministic stubs behind it, so an offline
deployment or a test can exercise the full network path. An optional
artificial delay plus an in-flight high-water mark support concurrency
tests.
"""

from __future__ import annotations

import json
import threading
import time
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer

from .clients import StubEmbedder, StubGenerator, StubScorer


class StubModelServer:
    def __init__(self, host: str = "127.0.0.1", port: int = 0, delay_seconds: float = 0.0) -> None:
        self.delay_seconds = delay_seconds
        self._embedder = StubEmbedder()
        self._generator = StubGenerator()
        self._scorer = StubScorer()
        self._lock = threading.Lock()
        self._inflight = 0
        self.max_inflight = 0

        server = self

        class Handler(BaseHTTPRequestHandler):
            def log_message(self, *args) -> None:  # keep test output quiet
                pass

            def do_POST(self) -> None:
                server._handle(self)

        self._httpd = ThreadingHTTPServer((host, port), Handler)
        self._thread = threading.Thread(target=self._httpd.serve_forever, daemon=True)

    @property
    def port(self) -> int:
        return self._httpd.server_address[1]

    @property
    def endpoint(self) -> str:
        host, port = self._httpd.server_address[:2]
        return f"http://{host}:{port}"

    def start(self) -> "StubModelServer":
        self._thread.start()
        return self

    def stop(self) -> None:
        self._httpd.shutdown()
        self._httpd.server_close()
        self._thread.join(timeout=5)

    def _enter(self) -> None:
        with self._lock:
            self._inflight += 1
            self.max_inflight = max(self.max_inflight, self._inflight)

    def _leave(self) -> None:
        with self._lock:
            self._inflight -= 1

    def _handle(self, request: BaseHTTPRequestHandler) -> None:
        self._enter()
        try:
            if self.delay_seconds > 0:
                time.sleep(self.delay_seconds)
            length = int(request.headers.get("Content-Length", 0))
            try:
                payload = json.loads(request.rfile.read(length) or b"{}")
            except json.JSONDecodeError:
                _respond(request, 400, {"error": "invalid JSON"})
                return
            if not isinstance(payload, dict):
                _respond(request, 400, {"error": "payload must be an object"})
                return
            try:
                if request.path == "/embed":
                    texts = payload["texts"]
                    vectors = self._embedder.embed_texts(texts)
                    _respond(request, 200, {"vectors": [[float(x) for x in row] for row in vectors]})
                elif request.path == "/generate":
                    texts = self._generator.generate_texts(
                        payload["role"],
                        payload["prompt"],
                        int(payload.get("n", 1)),
                        context=payload.get("context", []),
                    )
                    _respond(request, 200, {"texts": texts})
                elif request.path == "/score":
                    logits = self._scorer.cross_score(payload["query"], payload["passages"])
                    _respond(request, 200, {"logits": logits})
                else:
                    _respond(request, 404, {"error": f"unknown path {request.path}"})
            except (KeyError, TypeError, ValueError) as exc:
                _respond(request, 400, {"error": str(exc)})
            except Exception as exc:  # surface stub bugs as 500s, not hangs
                _respond(request, 500, {"error": str(exc)})
        finally:
            self._leave()


def _respond(request: BaseHTTPRequestHandler, status: int, body: dict) -> None:
    data = json.dumps(body, ensure_ascii=False).encode("utf-8")
    request.send_response(status)
    request.send_header("Content-Type", "application/json; charset=utf-8")
    request.send_header("Content-Length", str(len(data)))
    request.end_headers()
    request.wfile.write(data)
