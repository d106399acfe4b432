"""Logging setup and structured log helpers for the EFF pipeline"""
import json
import logging
from typing import Any, Optional, Sequence

import numpy as np

import config

ROOT_LOGGER_NAME = 'eff'

logger = logging.getLogger(ROOT_LOGGER_NAME)


def setup_debug_logger(log_level=None, log_file: Optional[str] = None) -> logging.Logger:
    """Configure the package logger once and return it.

    Repeated calls only adjust the level; handlers are never duplicated.
    """
    level = log_level if log_level is not None else config.LOG_LEVEL
    if isinstance(level, str):
        level = logging.getLevelName(level.upper())
    if not isinstance(level, int):
        level = logging.INFO

    if not logger.handlers:
        formatter = logging.Formatter(
            '%(asctime)s - %(name)s - %(levelname)s - %(message)s'
        )
        handler = logging.StreamHandler()
        handler.setFormatter(formatter)
        logger.addHandler(handler)

        path = log_file or config.LOG_FILE
        if path:
            file_handler = logging.FileHandler(path)
            file_handler.setFormatter(formatter)
            logger.addHandler(file_handler)
        logger.propagate = False

    logger.setLevel(level)
    return logger


def get_logger(name: str) -> logging.Logger:
    """Child of the package logger, e.g. ``eff.field_builder``."""
    return logger.getChild(name.rsplit('.', 1)[-1])


def log_scene_step(scene_id: str, step: str, status: str = 'success', detail: Optional[str] = None):
    """Log one pipeline stage for a scene"""
    message = f"[{scene_id}] {step}: {status}"
    if detail:
        message += f" ({detail})"
    if status == 'success':
        logger.debug(message)
    else:
        logger.warning(message)


def log_backend_call(argv: Sequence[str], returncode: Optional[int], stderr: str = ''):
    """Log an external backend invocation"""
    logger.debug(f"Backend command: {' '.join(argv)}")
    logger.debug(f"Backend exit code: {returncode}")
    if stderr:
        logger.debug(f"Backend stderr: {stderr[:500]}")


def log_field_stats(scene_id: str, weights: np.ndarray):
    """Log summary statistics of a fidelity field"""
    logger.debug(
        f"[{scene_id}] field min={float(weights.min()):.6f} "
        f"max={float(weights.max()):.6f} mass={float(weights.sum(dtype=np.float64)):.3f}"
    )


def log_error_context(error_type: str, error_message: str, context: Optional[dict] = None):
    """Log error with full context information"""
    logger.error(f"Error Type: {error_type}")
    logger.error(f"Error Message: {error_message}")
    if context:
        logger.error(f"Error Context: {json.dumps(context, indent=2, default=str)}")


def describe(value: Any, limit: int = 200) -> str:
    """Short printable preview of a value for log lines"""
    text = value if isinstance(value, str) else repr(value)
    return text if len(text) <= limit else text[:limit] + '...'
