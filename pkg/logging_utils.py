#!/usr/bin/env python3
"""
Logging helpers shared by the greensolve modules.

setup_logging attaches one file handler per log path and a single console
handler to the root logger, so solvers, the kernel cache and the runner can
each ask for their own log file without duplicating console output.
log_summary writes the banner block that closes every run.

Usage:
    from logging_utils import setup_logging, log_summary
    logger = setup_logging("logs/schrodinger.log", __name__)
    log_summary(logger, "CSOLA SUMMARY", [("Cutoffs", 15), ("Solution", False)])
"""
import logging
import os
from typing import Iterable, Tuple

LOG_FORMAT = "%(asctime)s - %(levelname)s - %(message)s"
DATE_FORMAT = "%Y-%m-%d %H:%M:%S"
BANNER_WIDTH = 80


def setup_logging(log_path: str = "logs/greensolve.log", logger_name: str = None, level: int = logging.INFO):
    """
    Configure file and console logging for a module.

    Calling it again with a path that already has a handler is a no-op, so
    long-lived objects can call it from their constructors.

    Args:
        log_path: Path to log file (default: logs/greensolve.log)
        logger_name: Name for the logger (default: None, uses __name__)
        level: Root logging level

    Returns:
        Configured logger instance
    """
    root = logging.getLogger()
    root.setLevel(level)
    formatter = logging.Formatter(LOG_FORMAT, datefmt=DATE_FORMAT)

    target = os.path.abspath(log_path)
    has_file = any(
        isinstance(h, logging.FileHandler) and h.baseFilename == target for h in root.handlers
    )
    if not has_file:
        log_dir = os.path.dirname(target)
        os.makedirs(log_dir, exist_ok=True)
        file_handler = logging.FileHandler(target)
        file_handler.setFormatter(formatter)
        root.addHandler(file_handler)

    has_console = any(type(h) is logging.StreamHandler for h in root.handlers)
    if not has_console:
        console = logging.StreamHandler()
        console.setFormatter(formatter)
        root.addHandler(console)

    return logging.getLogger(logger_name or __name__)


def log_summary(logger: logging.Logger, title: str, rows: Iterable[Tuple[str, object]]) -> None:
    """Write a banner block with one `Label: value` line per row."""
    logger.info("=" * BANNER_WIDTH)
    logger.info(title)
    logger.info("=" * BANNER_WIDTH)
    for label, value in rows:
        if isinstance(value, float):
            logger.info(f"{label}: {value:.6g}")
        else:
            logger.info(f"{label}: {value}")
