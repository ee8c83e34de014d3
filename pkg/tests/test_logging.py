import logging

from packages.kaizen.logging import (
    LOG_FORMAT,
    TRACE_ID_CTX_VAR,
    TraceIdFilter,
    TraceIdFormatter,
    get_logger,
    trace_scope,
)


def test_trace_scope_binds_and_resets():
    assert TRACE_ID_CTX_VAR.get() is None
    with trace_scope("run-123"):
        assert TRACE_ID_CTX_VAR.get() == "run-123"
        with trace_scope("inner"):
            assert TRACE_ID_CTX_VAR.get() == "inner"
        assert TRACE_ID_CTX_VAR.get() == "run-123"
    assert TRACE_ID_CTX_VAR.get() is None


def test_records_carry_the_bound_trace_id(caplog):
    logger = get_logger("kaizen.tests.trace")
    with caplog.at_level(logging.INFO, logger="kaizen.tests.trace"):
        with trace_scope("seed-7"):
            logger.info("task finished | task=%d", 2)
        logger.info("outside")

    messages = [record.getMessage() for record in caplog.records]
    assert messages[0] == "task finished | task=2 | trace_id=seed-7"
    assert messages[1] == "outside | trace_id=-"


def test_get_logger_attaches_one_handler():
    first = get_logger("kaizen.tests.handlers")
    second = get_logger("kaizen.tests.handlers")
    assert first is second
    assert len(first.handlers) == 1
    assert first.propagate is True


def test_formatter_fills_missing_trace_id():
    formatter = TraceIdFormatter(LOG_FORMAT)
    record = logging.LogRecord("x", logging.INFO, __file__, 1, "hello", (), None)
    assert formatter.format(record).endswith("| INFO | hello | trace_id=-")


def test_formatted_record_names_the_trace_id_once():
    record = logging.LogRecord("x", logging.INFO, __file__, 1, "step %d", (3,), None)
    with trace_scope("seed-2"):
        TraceIdFilter().filter(record)
    text = TraceIdFormatter(LOG_FORMAT).format(record)
    assert text.endswith("| INFO | step 3 | trace_id=seed-2")
    assert text.count("trace_id=") == 1
