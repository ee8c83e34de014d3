from __future__ import annotations

import logging
import uuid
from typing import TYPE_CHECKING

import pytest

from apps.api.main import app
from packages.kaizen.schemas import ErrorResponse
from tests._requires import requires_httpx

if TYPE_CHECKING:
    from fastapi.testclient import TestClient

pytestmark = [requires_httpx]

COMPLETE = {"num_tasks": 2, "rows": [[0.8], [0.6, 0.7]], "single_task": [0.8, 0.75]}


def _client() -> TestClient:
    from fastapi.testclient import TestClient

    return TestClient(app)


def test_root_and_health():
    with _client() as client:
        root = client.get("/")
        health = client.get("/healthz")

    assert root.json() == {"message": "kaizen-cssl API"}
    assert health.status_code == 200
    assert health.json()["status"] == "ok"
    assert health.json()["service"] == "kaizen-cssl"


def test_meta_lists_the_numeric_stack():
    with _client() as client:
        payload = client.get("/v1/meta").json()

    assert payload["service"] == "kaizen-cssl"
    assert {"python", "torch", "torchvision", "numpy"} <= set(payload["stack"])


class TestMetricsEndpoint:
    def test_reports_and_summary(self):
        with _client() as client:
            response = client.post("/v1/metrics", json={"matrices": [COMPLETE, COMPLETE]})

        assert response.status_code == 200
        body = response.json()
        assert len(body["reports"]) == 2
        report = body["reports"][0]
        assert report["final_accuracy"] == pytest.approx(0.65)
        assert report["forgetting"] == pytest.approx(0.2)
        assert report["forward_transfer"] == pytest.approx(-0.05)
        summary = body["summary"]["final_accuracy"]
        assert summary["mean"] == pytest.approx(0.65)
        assert summary["std"] == pytest.approx(0.0)
        assert summary["count"] == 2

    def test_incomplete_matrix_is_a_metrics_error(self):
        partial = {"num_tasks": 3, "rows": [[0.5], [0.4, 0.6]]}
        with _client() as client:
            response = client.post("/v1/metrics", json={"matrices": [partial]})

        assert response.status_code == 422
        error = ErrorResponse.model_validate(response.json()).error
        assert error.code == "METRICS_ERROR"
        assert error.trace_id == response.headers["X-Request-ID"]
        assert "2 of 3 rows" in error.message

    def test_malformed_body_is_a_validation_error(self):
        with _client() as client:
            response = client.post("/v1/metrics", json={"matrices": [{"num_tasks": 2, "rows": [[0.5, 0.5]]}]})

        assert response.status_code == 422
        error = response.json()["error"]
        assert error["code"] == "HTTP_422"
        assert error["details"]

    def test_table(self):
        rows = [{"strategy": "kaizen", "ssl_kind": "byol", "matrices": [COMPLETE]}]
        with _client() as client:
            response = client.post("/v1/metrics/table", json={"rows": rows, "digits": 2})

        assert response.status_code == 200
        lines = response.json()["table"].splitlines()
        assert lines[0].startswith("Strategy | SSL")
        assert lines[2].startswith("kaizen   | byol")
        assert "0.65" in lines[2]


class TestRequestId:
    def test_generated_when_absent(self):
        with _client() as client:
            response = client.get("/healthz")

        assert uuid.UUID(response.headers["X-Request-ID"]).version == 4

    def test_valid_header_is_echoed(self):
        request_id = str(uuid.uuid4())
        with _client() as client:
            response = client.get("/healthz", headers={"X-Request-ID": request_id})

        assert response.headers["X-Request-ID"] == request_id

    def test_invalid_header_is_replaced(self):
        with _client() as client:
            response = client.get("/healthz", headers={"X-Request-ID": "not-a-uuid"})

        assert response.headers["X-Request-ID"] != "not-a-uuid"

    def test_request_log_carries_the_request_id(self, caplog):
        request_id = str(uuid.uuid4())
        with caplog.at_level(logging.INFO, logger="apps.api.middleware"):
            with _client() as client:
                client.get("/healthz", headers={"X-Request-ID": request_id})

        messages = [r.getMessage() for r in caplog.records if r.name == "apps.api.middleware"]
        assert any(
            "request completed | method=GET path=/healthz status=200" in m and f"trace_id={request_id}" in m
            for m in messages
        )
