"""HTTP scoring endpoint.

Wire contract: POST /score with {"query": str, "passages": [str, ...]}
answers {"logits": [float, ...]}, one logit per passage, in order. This is
the protocol the retrieval engine's cross-encoder client speaks, so a
trained artifact can drop in behind it.
"""

from __future__ import annotations

import json
import threading
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer

from .model import TinyCrossEncoder


class ScoreServer:
    def __init__(self, model: TinyCrossEncoder, host: str = "127.0.0.1", port: int = 0) -> None:
        self._model = model
        self._lock = threading.Lock()  # scoring mutates no state, but torch modules are not reentrant
        server = self

        class Handler(BaseHTTPRequestHandler):
            def log_message(self, *args) -> None:
                pass

            def do_GET(self) -> None:
                if self.path == "/healthz":
                    _respond(self, 200, {"status": "ok"})
                else:
                    _respond(self, 404, {"error": {"code": "not-found", "message": self.path}})

            def do_POST(self) -> None:
                if self.path != "/score":
                    _respond(self, 404, {"error": {"code": "not-found", "message": self.path}})
                    return
                length = int(self.headers.get("Content-Length", 0))
                try:
                    payload = json.loads(self.rfile.read(length) or b"")
                except json.JSONDecodeError as exc:
                    _respond(self, 400, {"error": {"code": "bad-request", "message": str(exc)}})
                    return
                query = payload.get("query") if isinstance(payload, dict) else None
                passages = payload.get("passages") if isinstance(payload, dict) else None
                if (
                    not isinstance(query, str)
                    or not isinstance(passages, list)
                    or not all(isinstance(p, str) for p in passages)
                ):
                    _respond(
                        self,
                        400,
                        {"error": {"code": "bad-request", "message": "need 'query' and 'passages'"}},
                    )
                    return
                with server._lock:
                    logits = server._model.score(query, passages)
                _respond(self, 200, {"logits": logits})

        self._httpd = ThreadingHTTPServer((host, port), Handler)
        self._thread = threading.Thread(target=self._httpd.serve_forever, daemon=True)

    @property
    def endpoint(self) -> str:
        host, port = self._httpd.server_address[:2]
        return f"http://{host}:{port}"

    def start(self) -> "ScoreServer":
        self._thread.start()
        return self

    def stop(self) -> None:
        self._httpd.shutdown()
        self._httpd.server_close()
        self._thread.join(timeout=5)

    def serve_forever(self) -> None:
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
