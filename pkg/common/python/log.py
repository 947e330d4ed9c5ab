"""
Structlog setup shared by the CLI, the library and the Temporal worker.

Records from structlog and from stdlib loggers (temporalio, statsmodels)
are rendered by the same `ProcessorFormatter` and written to stderr, so
stdout stays free for command results.
"""

import logging
import logging.config
import os
from enum import StrEnum

import structlog
from structlog.typing import EventDict, Processor


class Stage(StrEnum):
    """Deployment stage; picks the renderer."""

    DEVELOPMENT = "DEVELOPMENT"
    PRODUCTION = "PRODUCTION"


class LogLevel(StrEnum):
    DEBUG = "DEBUG"
    INFO = "INFO"
    WARNING = "WARNING"
    ERROR = "ERROR"
    CRITICAL = "CRITICAL"


def _record_fields(app_name: str, with_location: bool) -> Processor:
    def add(_, __, event_dict: EventDict) -> EventDict:
        record: logging.LogRecord = event_dict["_record"]
        event_dict["level"] = record.levelname
        event_dict["app_name"] = app_name
        if with_location:
            event_dict["module"] = record.module
            event_dict["lineno"] = record.lineno
        if record.exc_info:
            event_dict["exc_info"] = record.exc_info
        return event_dict

    return add


def _renderers(stage: Stage) -> list[Processor]:
    if stage is Stage.DEVELOPMENT:
        return [structlog.dev.ConsoleRenderer(colors=False)]
    return [
        structlog.processors.format_exc_info,
        structlog.processors.UnicodeDecoder(),
        structlog.processors.JSONRenderer(sort_keys=True),
    ]


def setup_logging(app_name: str, stage: Stage, level: LogLevel) -> structlog.stdlib.BoundLogger:
    """
    Route stdlib logging and structlog through one formatter on stderr.

    Reference: https://www.structlog.org/en/stable/standard-library.html#rendering-using-structlog-based-formatters-within-logging
    """
    timestamper = structlog.processors.TimeStamper(fmt="%Y-%m-%d %H:%M:%S")
    shared: list[Processor] = [
        structlog.contextvars.merge_contextvars,
        structlog.stdlib.add_log_level,
        structlog.stdlib.add_logger_name,
        timestamper,
    ]
    formatter = {
        "()": structlog.stdlib.ProcessorFormatter,
        "foreign_pre_chain": [*shared, structlog.stdlib.ExtraAdder()],
        "processors": [
            _record_fields(app_name, with_location=stage is Stage.PRODUCTION),
            structlog.stdlib.ProcessorFormatter.remove_processors_meta,
            *_renderers(stage),
        ],
    }
    logging.config.dictConfig(
        {
            "version": 1,
            "disable_existing_loggers": False,
            "formatters": {"structlog": formatter},
            "handlers": {
                "stderr": {
                    "class": "logging.StreamHandler",
                    "stream": "ext://sys.stderr",
                    "formatter": "structlog",
                },
            },
            "root": {"handlers": ["stderr"], "level": str(level)},
        }
    )
    structlog.configure(
        processors=[
            structlog.stdlib.filter_by_level,
            *shared,
            structlog.stdlib.PositionalArgumentsFormatter(),
            structlog.processors.StackInfoRenderer(),
            structlog.stdlib.ProcessorFormatter.wrap_for_formatter,
        ],
        logger_factory=structlog.stdlib.LoggerFactory(),
        wrapper_class=structlog.stdlib.BoundLogger,
        # handlers are replaced on every call, so bound loggers must not be cached
        cache_logger_on_first_use=False,
    )
    return structlog.get_logger(app_name)


def configure_logging(
    app_name: str = "urban-centrality", log_level: str | None = None
) -> structlog.stdlib.BoundLogger:
    """
    Configure logging from the `STAGE` and `LOG_LEVEL` environment variables.

    An explicit `log_level` (e.g. from a CLI flag) wins over the environment.
    """
    level = log_level or os.getenv("LOG_LEVEL", str(LogLevel.INFO))
    stage = os.getenv("STAGE", str(Stage.DEVELOPMENT))
    return setup_logging(app_name, Stage(stage.upper()), LogLevel(level.upper()))
