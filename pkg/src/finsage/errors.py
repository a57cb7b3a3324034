"""Exception hierarchy shared across the engine.

Every error carries a short machine-readable ``code`` (kebab-case) so the
CLI can emit structured error JSON, plus the exit code class it maps to.
"""

from __future__ import annotations


class FinSageError(Exception):
    """Base class for all engine errors."""

    exit_code = 1

    def __init__(self, code: str, message: str, **context) -> None:
        super().__init__(message)
        self.code = code
        self.message = message
        self.context = context

    def to_json_dict(self) -> dict:
        body = {"code": self.code, "message": self.message}
        if self.context:
            body["context"] = {k: v for k, v in sorted(self.context.items())}
        return {"error": body}


class ConfigError(FinSageError):
    """Invalid configuration value, file, or command-line argument."""

    exit_code = 2


class StoreError(FinSageError):
    """Chunk store problem: missing, malformed, empty, or incompatible."""

    exit_code = 3


class ClientError(FinSageError):
    """Model client failure after retries, or a malformed response."""

    exit_code = 4

    def __init__(self, code: str, message: str, retryable: bool = False, **context) -> None:
        super().__init__(code, message, **context)
        self.retryable = retryable


class InputDataError(FinSageError):
    """Malformed input data file (parsed content lists, eval queries, annotations)."""

    exit_code = 5
