"""
Logging Service for SDT
Process-wide logging setup and module loggers
"""
import logging
import os
import sys
from typing import Optional

_FORMAT = "%(asctime)s | %(levelname)-7s | {app} | %(name)s | %(message)s"
_configured_app: Optional[str] = None


def setup_logging(app_name: str = "SDT", level: Optional[str] = None, log_file: Optional[str] = None):
    """
    Configure the root logger once per process.

    Args:
        app_name (str): Name shown in every log line.
        level (str, optional): Level name; defaults to env LOG_LEVEL or INFO.
        log_file (str, optional): Extra file handler; defaults to env LOG_FILE.
    """
    global _configured_app
    level = (level or os.getenv("LOG_LEVEL", "INFO")).upper()
    log_file = log_file or os.getenv("LOG_FILE")

    root = logging.getLogger()
    if _configured_app is not None:
        root.setLevel(level)
        return

    formatter = logging.Formatter(_FORMAT.format(app=app_name))
    handlers = [logging.StreamHandler(sys.stderr)]
    if log_file:
        os.makedirs(os.path.dirname(os.path.abspath(log_file)), exist_ok=True)
        handlers.append(logging.FileHandler(log_file))
    for handler in handlers:
        handler.setFormatter(formatter)
        root.addHandler(handler)
    root.setLevel(level)
    _configured_app = app_name


def get_logger(name: str) -> logging.Logger:
    return logging.getLogger(name)
