import logging

from rich.logging import RichHandler

from .config import ENABLE_DEBUG, LOG_LEVEL
from .ui import console


def setup_logger(name: str = "epi_estimator", level: str = LOG_LEVEL) -> logging.Logger:
    """
    Package logger writing through a RichHandler on the shared stderr console.

    The handler is attached to the package logger only, so importing the
    library leaves the root logger of the host application untouched.

    Args:
        name (str): Logger name; children such as ``epi_estimator.mcmc`` inherit it.
        level (str): Level name; ``DEBUG=true`` in the environment overrides it.

    Returns:
        logging.Logger: Configured logger.
    """
    log = logging.getLogger(name)
    if not log.handlers:
        handler = RichHandler(console=console, rich_tracebacks=True, markup=True, show_path=ENABLE_DEBUG)
        handler.setFormatter(logging.Formatter("%(message)s", datefmt="[%X]"))
        log.addHandler(handler)
        log.propagate = False
    log.setLevel(logging.DEBUG if ENABLE_DEBUG else level)
    return log


# Singleton logger instance
logger = setup_logger()
