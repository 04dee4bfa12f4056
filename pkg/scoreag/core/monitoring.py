"""
Monitoring and error tracking configuration.
This module sets up logging for every command and Sentry for error tracking.
"""

import json
import logging
import sys
from typing import Any, Dict, Optional

import sentry_sdk
from sentry_sdk.integrations.logging import LoggingIntegration

from scoreag.core.config import LogFormat, Settings, settings as default_settings

# Set up logger
logger = logging.getLogger(__name__)

_TEXT_FORMAT = "%(asctime)s - %(name)s - %(levelname)s - %(message)s"

# Attributes every LogRecord carries; anything else came in through ``extra``
_RESERVED = set(logging.LogRecord("", 0, "", 0, "", (), None).__dict__) | {"message", "asctime"}


class JsonLogFormatter(logging.Formatter):
    """Render each record as one JSON object per line."""

    def format(self, record: logging.LogRecord) -> str:
        payload: Dict[str, Any] = {
            "time": self.formatTime(record),
            "logger": record.name,
            "level": record.levelname,
            "message": record.getMessage(),
        }
        for key, value in record.__dict__.items():
            if key not in _RESERVED and not key.startswith("_"):
                payload[key] = value
        if record.exc_info:
            payload["exc_info"] = self.formatException(record.exc_info)
        return json.dumps(payload, default=str, sort_keys=True)


def setup_logging(settings: Optional[Settings] = None) -> None:
    """
    Configure the root logger on stderr.

    Args:
        settings: Process settings; the module-level settings are used if omitted
    """
    settings = settings or default_settings
    handler = logging.StreamHandler(sys.stderr)
    if settings.LOG_FORMAT == LogFormat.JSON:
        handler.setFormatter(JsonLogFormatter())
    else:
        handler.setFormatter(logging.Formatter(_TEXT_FORMAT))

    root = logging.getLogger()
    for existing in list(root.handlers):
        root.removeHandler(existing)
    root.addHandler(handler)
    root.setLevel(settings.LOG_LEVEL.value)


def init_sentry(settings: Optional[Settings] = None) -> bool:
    """
    Initialize Sentry SDK for error tracking.
    Only activates if SENTRY_DSN is set.

    Returns:
        True if Sentry was initialised
    """
    settings = settings or default_settings
    if not settings.SENTRY_DSN:
        logger.debug("Sentry DSN not set - error tracking is disabled")
        return False

    sentry_sdk.init(
        dsn=settings.SENTRY_DSN,
        environment=settings.ENVIRONMENT.value,
        traces_sample_rate=0.0,
        integrations=[
            LoggingIntegration(
                level=logging.INFO,        # Capture info and above as breadcrumbs
                event_level=logging.ERROR  # Send errors as events
            ),
        ],
    )
    logger.info(f"Sentry initialized with environment: {settings.ENVIRONMENT.value}")
    return True


def setup_monitoring(settings: Optional[Settings] = None) -> None:
    """Set up logging and, when configured, Sentry."""
    setup_logging(settings)
    init_sentry(settings)


def capture_exception(exception: BaseException, context: Optional[Dict[str, Any]] = None) -> None:
    """
    Capture an exception in Sentry with optional additional context.
    A no-op when Sentry was never initialised.

    Args:
        exception: The exception to capture
        context: Optional dictionary with additional context data
    """
    if sentry_sdk.Hub.current.client is None:
        return
    with sentry_sdk.push_scope() as scope:
        for key, value in (context or {}).items():
            scope.set_extra(key, value)
        sentry_sdk.capture_exception(exception)
