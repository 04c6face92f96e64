"""
Logging for the audit toolkit
One package logger with rotating-file and console handlers; run-scoped
adapters tag each line with the run id it belongs to
"""

import logging
import logging.handlers
import os
from typing import Any, List, MutableMapping, Optional, Tuple, Union

from .config import LoggingConfig

PACKAGE_LOGGER = "tcc_saliency_audit"
LOG_FORMAT = "%(asctime)s - %(name)s - %(levelname)s - %(run)s%(message)s"
DATE_FORMAT = "%Y-%m-%d %H:%M:%S"

AuditLogger = Union[logging.Logger, "RunLoggerAdapter"]


class _RunField(logging.Filter):
    """Records logged outside a run get an empty ``run`` field"""

    def filter(self, record: logging.LogRecord) -> bool:
        if not hasattr(record, "run"):
            record.run = ""
        return True


class RunLoggerAdapter(logging.LoggerAdapter):
    """Prefixes every record with ``[run_id]``"""

    def process(self, msg: Any, kwargs: MutableMapping[str, Any]) -> Tuple[Any, MutableMapping[str, Any]]:
        extra = dict(kwargs.get("extra") or {})
        extra["run"] = f"[{self.extra['run_id']}] "
        kwargs["extra"] = extra
        return msg, kwargs


class LoggerManager:
    """Owns the handlers attached to the package logger"""

    _handlers: List[logging.Handler] = []
    _configured: bool = False

    @classmethod
    def setup(cls, log_config: Optional[LoggingConfig] = None, force: bool = False) -> None:
        """
        Attach handlers to the package logger

        Args:
            log_config: Logging section (defaults when None)
            force: Replace handlers from an earlier setup (the CLI re-runs setup
                once ``--config`` has been read)
        """
        if cls._configured and not force:
            return
        cls.reset()
        log_config = log_config or LoggingConfig()

        package = logging.getLogger(PACKAGE_LOGGER)
        level = logging.getLevelName(log_config.level.upper())
        package.setLevel(level if isinstance(level, int) else logging.INFO)
        package.propagate = False

        formatter = logging.Formatter(LOG_FORMAT, datefmt=DATE_FORMAT)
        handlers: List[logging.Handler] = []
        if log_config.log_to_file:
            log_dir = os.path.dirname(log_config.log_file)
            if log_dir:
                os.makedirs(log_dir, exist_ok=True)
            handlers.append(logging.handlers.RotatingFileHandler(
                log_config.log_file,
                maxBytes=log_config.max_bytes,
                backupCount=log_config.backup_count,
            ))
        if log_config.log_to_console:
            # stderr keeps stdout free for reports
            handlers.append(logging.StreamHandler())

        for handler in handlers:
            handler.setFormatter(formatter)
            handler.addFilter(_RunField())
            package.addHandler(handler)
        cls._handlers = handlers
        cls._configured = True

    @classmethod
    def reset(cls) -> None:
        """Detach and close the handlers from the last setup"""
        package = logging.getLogger(PACKAGE_LOGGER)
        for handler in cls._handlers:
            package.removeHandler(handler)
            handler.close()
        cls._handlers = []
        package.propagate = True
        cls._configured = False


def get_logger(name: str) -> logging.Logger:
    """Module logger (typically ``get_logger(__name__)``)"""
    return logging.getLogger(name)


def run_logger(name: str, run_id: Optional[str]) -> AuditLogger:
    """Module logger tagged with ``run_id``; untagged when ``run_id`` is None"""
    base = get_logger(name)
    if run_id is None:
        return base
    return RunLoggerAdapter(base, {"run_id": run_id})
