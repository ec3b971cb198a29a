"""
Tests for run tagging in the logging setup.
"""

import logging

from app.core.logger import LOG_FORMAT, RunContextFilter, configure_logging, run_context


def _record() -> logging.LogRecord:
    return logging.LogRecord("holotts.test", logging.INFO, __file__, 1, "msg", None, None)


def test_records_outside_a_run_get_placeholder():
    record = _record()
    assert RunContextFilter().filter(record)
    assert record.run == "-"


def test_run_context_tags_and_resets():
    run_filter = RunContextFilter()
    with run_context("0123abcd", 7) as tag:
        record = _record()
        run_filter.filter(record)
        assert record.run == tag == "0123abcd:7"
    record = _record()
    run_filter.filter(record)
    assert record.run == "-"


def test_configured_handlers_format_the_tag():
    configure_logging(logging.WARNING)
    tagged = [h for h in logging.getLogger().handlers if any(isinstance(f, RunContextFilter) for f in h.filters)]
    assert tagged
    record = _record()
    with run_context("feed", 1):
        for f in tagged[0].filters:
            f.filter(record)
    assert "[feed:1]" in logging.Formatter(LOG_FORMAT).format(record)
