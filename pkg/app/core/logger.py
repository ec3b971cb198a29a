import logging
import logging.handlers
from contextlib import contextmanager
from contextvars import ContextVar
from pathlib import Path
from typing import Iterator, Optional

from app.core.config import settings

LOG_FORMAT = "%(asctime)s %(levelname)-8s %(name)s:%(lineno)d [%(run)s] - %(message)s"

_run_tag: ContextVar[str] = ContextVar("run_tag", default="-")


class RunContextFilter(logging.Filter):
    """Stamps each record with the active run tag, ``<config_hash>:<seed>``."""

    def filter(self, record: logging.LogRecord) -> bool:
        record.run = _run_tag.get()
        return True


@contextmanager
def run_context(config_hash: str, seed: int) -> Iterator[str]:
    tag = f"{config_hash}:{seed}"
    token = _run_tag.set(tag)
    try:
        yield tag
    finally:
        _run_tag.reset(token)


def _log_file() -> Path:
    return Path(settings.LOG_DIR) / "holotts.log"


def _resolve_level(level: Optional[int]) -> int:
    if level is not None:
        return level
    if settings.LOG_LEVEL:
        return logging.getLevelName(settings.LOG_LEVEL.upper())
    return logging.DEBUG if settings.DEBUG else logging.INFO


def configure_logging(level: Optional[int] = None) -> None:
    """Configure root logging for the application.

    - Creates the log dir if missing.
    - Adds a stream handler and rotating file handler, both tagging records
      with the current run.
    - Sets uvicorn loggers to use the same handlers.

    Calling it again only updates the level.
    """
    log_file = _log_file()
    log_file.parent.mkdir(parents=True, exist_ok=True)

    root = logging.getLogger()
    root.setLevel(_resolve_level(level))
    formatter = logging.Formatter(LOG_FORMAT)
    run_filter = RunContextFilter()

    if not any(isinstance(h, logging.handlers.RotatingFileHandler) for h in root.handlers):
        fh = logging.handlers.RotatingFileHandler(
            log_file,
            maxBytes=5 * 1024 * 1024,
            backupCount=5,
            encoding="utf-8",
        )
        fh.setFormatter(formatter)
        fh.addFilter(run_filter)
        root.addHandler(fh)
    if not any(type(h) is logging.StreamHandler for h in root.handlers):
        ch = logging.StreamHandler()
        ch.setFormatter(formatter)
        ch.addFilter(run_filter)
        root.addHandler(ch)

    for h in root.handlers:
        if any(isinstance(f, RunContextFilter) for f in h.filters):
            h.setLevel(root.level)

    for name in ("uvicorn", "uvicorn.error", "uvicorn.access"):
        logger = logging.getLogger(name)
        logger.handlers = root.handlers
        logger.setLevel(root.level)


def get_logger(name: str) -> logging.Logger:
    return logging.getLogger(name)
