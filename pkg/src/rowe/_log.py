"""Diagnostics on stderr, controlled by the ROWE_LOG environment variable.

ROWE_LOG may be one of ``error``, ``warn``, ``info``, ``debug``.  Unset or
unrecognized values fall back to ``error``.  Diagnostics never go to stdout;
stdout is reserved for data (CLI output, bench reports).
"""

import logging
import os

_LEVELS = {
    "error": logging.ERROR,
    "warn": logging.WARNING,
    "warning": logging.WARNING,
    "info": logging.INFO,
    "debug": logging.DEBUG,
}

_configured = False


def get_logger() -> logging.Logger:
    global _configured
    logger = logging.getLogger("rowe")
    if not _configured:
        wanted = os.environ.get("ROWE_LOG", "").strip().lower()
        handler = logging.StreamHandler()  # stderr
        handler.setFormatter(logging.Formatter("rowe: %(levelname)s: %(message)s"))
        logger.addHandler(handler)
        logger.setLevel(_LEVELS.get(wanted, logging.ERROR))
        logger.propagate = False
        _configured = True
    return logger
