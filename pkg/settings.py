"""
Runtime settings read from the environment (and a .env file when present).
"""

import logging
import os
from typing import Optional

from dotenv import load_dotenv

from errors import ConfigurationError

# Load environment variables from .env file
load_dotenv()

LOG_FORMAT = "%(levelname)s: %(message)s"
DEFAULT_WEIGHTS = os.path.join('weights', 'demo_inference.uiew')


def threads() -> int:
    """Worker cap for batch enhancement (UWE_THREADS, default CPU count)."""
    raw = os.environ.get('UWE_THREADS')
    if raw is None or raw.strip() == '':
        return os.cpu_count() or 1
    try:
        value = int(raw)
    except ValueError:
        raise ConfigurationError(f"UWE_THREADS must be a positive integer, got {raw!r}")
    if value < 1:
        raise ConfigurationError(f"UWE_THREADS must be a positive integer, got {raw!r}")
    return value


def log_level(override: Optional[str] = None) -> int:
    name = (override or os.environ.get('UWE_LOG_LEVEL') or 'INFO').upper()
    level = logging.getLevelName(name)
    if not isinstance(level, int):
        raise ConfigurationError(f"unknown log level {name!r}")
    return level


def configure_logging(override: Optional[str] = None) -> None:
    logging.basicConfig(level=log_level(override), format=LOG_FORMAT, force=True)


def weights_path() -> str:
    return os.environ.get('UWE_WEIGHTS', DEFAULT_WEIGHTS)
