"""
Centralized logging configuration for GaitForge
"""

import logging
import sys
from pathlib import Path
from typing import Optional
import functools
import time

ROOT_LOGGER_NAME = "gaitforge"
TRAIN_LOGGER_NAME = f"{ROOT_LOGGER_NAME}.train"


class StepRecordFormatter(logging.Formatter):
    """Formatter rendering structured step records as key=value lines"""

    def format(self, record: logging.LogRecord) -> str:
        """Format a record carrying a ``fields`` mapping as ``k=v k=v`` text"""
        fields = getattr(record, 'fields', None)
        if fields:
            return " ".join(f"{key}={value}" for key, value in fields.items())
        return super().format(record)


def setup_logger(
    name: str = ROOT_LOGGER_NAME,
    log_level: str = "INFO",
    log_file: Optional[Path] = None
) -> logging.Logger:
    """
    Setup and configure logger

    Args:
        name: Logger name
        log_level: Logging level (DEBUG, INFO, WARNING, ERROR, CRITICAL)
        log_file: Optional path to log file

    Returns:
        Configured logger instance
    """
    logger = logging.getLogger(name)
    logger.setLevel(logging.DEBUG if log_file else getattr(logging, log_level.upper()))

    # Remove existing handlers
    logger.handlers.clear()

    console_handler = logging.StreamHandler(sys.stdout)
    console_handler.setLevel(getattr(logging, log_level.upper()))

    formatter = StepRecordFormatter(
        '%(asctime)s - %(name)s - %(levelname)s - %(message)s',
        datefmt='%Y-%m-%d %H:%M:%S'
    )

    console_handler.setFormatter(formatter)
    logger.addHandler(console_handler)

    if log_file:
        log_file.parent.mkdir(parents=True, exist_ok=True)
        file_handler = logging.FileHandler(log_file, encoding='utf-8')
        file_handler.setLevel(logging.DEBUG)  # Always log everything to file
        file_formatter = StepRecordFormatter(
            '%(asctime)s - %(name)s - %(levelname)s - %(funcName)s:%(lineno)d - %(message)s',
            datefmt='%Y-%m-%d %H:%M:%S'
        )
        file_handler.setFormatter(file_formatter)
        logger.addHandler(file_handler)

    return logger


def setup_training_log(log_file: Path) -> logging.Logger:
    """
    Attach a record file to the training logger

    Each step record is written as one ``step=<n> lr=<v> ...`` line.

    Args:
        log_file: Destination of the line-oriented step records

    Returns:
        The training logger
    """
    logger = logging.getLogger(TRAIN_LOGGER_NAME)
    logger.setLevel(logging.INFO)
    for handler in list(logger.handlers):
        if isinstance(handler, logging.FileHandler):
            handler.close()
            logger.removeHandler(handler)

    log_file.parent.mkdir(parents=True, exist_ok=True)
    handler = logging.FileHandler(log_file, encoding='utf-8')
    handler.setFormatter(StepRecordFormatter('%(message)s'))
    logger.addHandler(handler)
    return logger


def log_execution_time(logger: logging.Logger):
    """
    Decorator to log function execution time

    Args:
        logger: Logger instance to use

    Returns:
        Decorated function
    """
    def decorator(func):
        @functools.wraps(func)
        def wrapper(*args, **kwargs):
            start_time = time.time()
            logger.debug(f"Starting {func.__name__}")

            try:
                result = func(*args, **kwargs)
                elapsed_time = time.time() - start_time
                logger.info(f"Completed {func.__name__} in {elapsed_time:.2f}s")
                return result
            except Exception as e:
                elapsed_time = time.time() - start_time
                logger.error(f"Failed {func.__name__} after {elapsed_time:.2f}s: {str(e)}")
                raise

        return wrapper
    return decorator


def get_logger(name: str = ROOT_LOGGER_NAME) -> logging.Logger:
    """
    Get existing logger instance under the gaitforge hierarchy

    Args:
        name: Logger name (module ``__name__`` is accepted)

    Returns:
        Logger instance
    """
    if name != ROOT_LOGGER_NAME and not name.startswith(f"{ROOT_LOGGER_NAME}."):
        name = f"{ROOT_LOGGER_NAME}.{name}"
    return logging.getLogger(name)
