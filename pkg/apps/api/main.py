"""FastAPI application exposing the metric computations over HTTP."""

from __future__ import annotations

import logging
from contextlib import asynccontextmanager

from fastapi import FastAPI, Request
from fastapi.exceptions import RequestValidationError
from fastapi.middleware.cors import CORSMiddleware
from fastapi.responses import JSONResponse
from starlette.exceptions import HTTPException as StarletteHTTPException

from apps.api.middleware import RequestIdMiddleware, RequestLoggingMiddleware
from apps.api.routes.health import router as health_router
from apps.api.routes.v1.meta import router as meta_v1_router
from apps.api.routes.v1.metrics import router as metrics_v1_router
from packages.kaizen import (
    KaizenError,
    build_error_response,
    get_logger,
    get_settings,
    get_version_info,
)


@asynccontextmanager
async def lifespan(app: FastAPI):
    app.state.logger = get_logger("kaizen.api")
    app.state.logger.info("Logger initialized")
    yield


def _validation_details(exc: RequestValidationError) -> list[dict[str, str]]:
    return [
        {"field": ".".join(str(part) for part in error["loc"]), "message": error["msg"]}
        for error in exc.errors()
    ]


def create_app() -> FastAPI:
    """Create and configure the FastAPI application."""

    settings = get_settings()

    app = FastAPI(
        title=settings.name,
        version=get_version_info().version,
        lifespan=lifespan,
    )

    # innermost
    app.add_middleware(RequestLoggingMiddleware)

    app.add_middleware(
        CORSMiddleware,
        allow_origins=settings.cors_allow_origins,
        allow_methods=settings.cors_allow_methods,
        allow_headers=settings.cors_allow_headers,
        allow_credentials=settings.cors_allow_credentials,
    )

    # outermost
    app.add_middleware(RequestIdMiddleware)

    def _log_error(status_code: int, code: str, message: str) -> None:
        logger = getattr(app.state, "logger", get_logger("kaizen.api"))
        level = logging.ERROR if status_code >= 500 else logging.WARNING
        logger.log(level, "request error | status=%d code=%s message=%s", status_code, code, message)

    @app.exception_handler(StarletteHTTPException)
    async def handle_http_exception(_request: Request, exc: StarletteHTTPException) -> JSONResponse:
        code = f"HTTP_{exc.status_code}"
        message = exc.detail if isinstance(exc.detail, str) else str(exc.detail)
        _log_error(exc.status_code, code, message)
        return JSONResponse(status_code=exc.status_code, content=build_error_response(code, message))

    @app.exception_handler(RequestValidationError)
    async def handle_validation_error(_request: Request, exc: RequestValidationError) -> JSONResponse:
        _log_error(422, "HTTP_422", "Validation Error")
        return JSONResponse(
            status_code=422,
            content=build_error_response(
                "HTTP_422", "Validation Error", details=_validation_details(exc)
            ),
        )

    @app.exception_handler(KaizenError)
    async def handle_kaizen_error(_request: Request, exc: KaizenError) -> JSONResponse:
        _log_error(422, exc.code, exc.message)
        return JSONResponse(status_code=422, content=exc.to_payload())

    @app.exception_handler(Exception)
    async def handle_unhandled_exception(_request: Request, exc: Exception) -> JSONResponse:
        logger = getattr(app.state, "logger", get_logger("kaizen.api"))
        logger.error("request error | status=500 code=HTTP_500", exc_info=exc)
        return JSONResponse(
            status_code=500, content=build_error_response("HTTP_500", "Internal Server Error")
        )

    app.include_router(health_router)
    app.include_router(meta_v1_router)
    app.include_router(metrics_v1_router)

    @app.get("/", summary="Root placeholder")
    async def read_root() -> dict[str, str]:
        return {"message": f"{settings.name} API"}

    return app


app = create_app()
