"""Console and file logging through loguru."""
import logging
import sys
import typing as t

from loguru import logger

from sonarpnp import meta
from sonarpnp.config import Log

USER_LOG_PATH = (
    meta.APPLICATION_PATHS.user_log_path / f"{meta.__app_name__}.log"
)

#: Third-party loggers that talk through the standard library.
ROUTED_LOGGERS = ("cvxpy", "matplotlib")


class InterceptHandler(logging.Handler):
    """Forward stdlib log records, e.g. from cvxpy, to loguru."""

    def emit(self, record: logging.LogRecord) -> None:
        """Re-log the record from the frame that created it."""
        level: t.Union[str, int]
        try:
            level = logger.level(record.levelname).name
        except ValueError:
            level = record.levelno

        # Skip the logging module's own frames.
        frame, depth = logging.currentframe(), 2
        while frame is not None and frame.f_code.co_filename == (
            logging.__file__
        ):
            frame, depth = frame.f_back, depth + 1

        logger.opt(depth=depth, exception=record.exc_info).log(
            level, record.getMessage()
        )


def setup_logging(level: t.Optional[str] = None) -> None:
    """
    Send log messages to stderr and to the user log file.

    level is the stderr threshold and defaults to log.level from the
    config; the file always receives DEBUG and up, rotated and pruned
    per the log section. The solver libraries' stdlib loggers are
    routed here too, quieted to WARNING unless level is DEBUG.
    """
    level = (level or Log.level).upper()
    logging.basicConfig(
        handlers=[InterceptHandler()], level=logging.NOTSET, force=True
    )
    library_level = logging.DEBUG if level == "DEBUG" else logging.WARNING
    for name in ROUTED_LOGGERS:
        logging.getLogger(name).setLevel(library_level)

    logger.remove()
    logger.add(sys.stderr, level=level)
    logger.add(
        USER_LOG_PATH,
        level="DEBUG",
        rotation=Log.rotation,
        retention=Log.retention,
    )
