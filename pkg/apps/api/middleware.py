"""Request id propagation and request logging middleware."""

from __future__ import annotations

import logging
import uuid
from time import perf_counter_ns

from starlette.datastructures import Headers, MutableHeaders
from starlette.types import ASGIApp, Message, Receive, Scope, Send

from packages.kaizen.logging import TRACE_ID_CTX_VAR, get_logger


def _validate_request_id(value: str | None) -> str:
    """Return *value* if it is a UUID, otherwise a fresh UUID4."""

    if value:
        try:
            return str(uuid.UUID(value))
        except ValueError:
            pass
    return str(uuid.uuid4())


class RequestIdMiddleware:
    """Bind the request id as the trace id and echo it in ``X-Request-ID``."""

    def __init__(self, app: ASGIApp):
        self.app = app

    async def __call__(self, scope: Scope, receive: Receive, send: Send):
        if scope["type"] != "http":
            await self.app(scope, receive, send)
            return

        request_id = _validate_request_id(Headers(scope=scope).get("X-Request-ID"))
        token = TRACE_ID_CTX_VAR.set(request_id)

        async def send_wrapper(message: Message) -> None:
            if message["type"] == "http.response.start":
                MutableHeaders(scope=message)["X-Request-ID"] = request_id
            await send(message)

        try:
            await self.app(scope, receive, send_wrapper)
        finally:
            TRACE_ID_CTX_VAR.reset(token)


def _level_for(status: int) -> int:
    if status >= 500:
        return logging.ERROR
    return logging.WARNING if status >= 400 else logging.INFO


class RequestLoggingMiddleware:
    """Log one line per completed request; 4xx at WARNING, 5xx at ERROR."""

    def __init__(self, app: ASGIApp):
        self.app = app
        self.logger = get_logger(__name__)

    async def __call__(self, scope: Scope, receive: Receive, send: Send) -> None:
        if scope["type"] != "http":
            await self.app(scope, receive, send)
            return

        started = perf_counter_ns()
        response: dict[str, int] = {}

        async def record_status(message: Message) -> None:
            if message["type"] == "http.response.start":
                response["status"] = message["status"]
            await send(message)

        try:
            await self.app(scope, receive, record_status)
        finally:
            # No response start means the app raised before answering.
            status = response.get("status", 500)
            self.logger.log(
                _level_for(status),
                "request completed | method=%s path=%s status=%d duration_ms=%d",
                scope.get("method"),
                scope.get("path"),
                status,
                (perf_counter_ns() - started) // 1_000_000,
            )
