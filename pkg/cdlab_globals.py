"""
CDLab Globals Module

This module provides global configuration and initialization for the CDLab laboratory.
It loads environment variables, exposes the defaults used by the command line and the
service, and sets up application-wide logging.

Key Components:
-------------
- Environment Loading: Loads configuration from .env files
- Run Defaults: Output directory, resolution, seed and worker count
- Logging: Application-wide logging configuration
- Initialization Control: Single initialization guarantee via _initialized flag

Configuration Flow:
----------------
1. Environment variables loaded from .env file
2. Defaults extracted and validated
3. Logging initialized at the configured level
4. Global state tracked to prevent re-initialization

Environment Variables:
    CDLAB_LOG_LEVEL: Logging level name (default INFO)
    CDLAB_OUTPUT_DIR: Directory for CSV artifacts (default runs)
    CDLAB_WORKERS: Threads used for family rows and audit samples (default 1)
    CDLAB_DEFAULT_RESOLUTION: Default node count n (default 2000)
    CDLAB_SEED: Default seed for random audits (default 20240917)

Dependencies:
-----------
- os: Environment variable access
- dotenv: .env file loading
- logging: Application logging

Author: CDLab developers
Contact: CDLab issue tracker
Maintained by: CDLab maintainers
Version: 1.0.0
"""

import os
import logging
from dotenv import load_dotenv

# Global flag to ensure single initialization
_initialized = False

LOG_LEVEL = 'INFO'
OUTPUT_DIR = 'runs'
WORKERS = 1
DEFAULT_RESOLUTION = 2000
DEFAULT_SEED = 20240917

logger = logging.getLogger(__name__)


def _int_from_env(name: str, default: int, minimum: int) -> int:
    raw = os.getenv(name)
    if raw is None or raw.strip() == '':
        return default
    try:
        value = int(raw)
    except ValueError:
        logger.error(f'{name} must be an integer, got {raw!r}')
        raise ValueError(f'{name} must be an integer, got {raw!r}')
    if value < minimum:
        logger.error(f'{name} must be >= {minimum}, got {value}')
        raise ValueError(f'{name} must be >= {minimum}, got {value}')
    return value


def globals_initialize():
    global _initialized, \
        LOG_LEVEL, \
        OUTPUT_DIR, \
        WORKERS, \
        DEFAULT_RESOLUTION, \
        DEFAULT_SEED

    if _initialized:
        return
    load_dotenv()

    LOG_LEVEL = os.getenv('CDLAB_LOG_LEVEL', 'INFO').upper()
    logging.basicConfig(level=getattr(logging, LOG_LEVEL, logging.INFO))

    OUTPUT_DIR = os.getenv('CDLAB_OUTPUT_DIR', 'runs')
    WORKERS = _int_from_env('CDLAB_WORKERS', 1, 1)
    DEFAULT_RESOLUTION = _int_from_env('CDLAB_DEFAULT_RESOLUTION', 2000, 16)
    DEFAULT_SEED = _int_from_env('CDLAB_SEED', 20240917, 0)

    logger.info(f'CDLAB_OUTPUT_DIR: {OUTPUT_DIR}')
    logger.info(f'CDLAB_WORKERS: {WORKERS}')
    logger.info(f'CDLAB_DEFAULT_RESOLUTION: {DEFAULT_RESOLUTION}')
    logger.info(f'CDLAB_SEED: {DEFAULT_SEED}')

    _initialized = True
    logger.info('CDLab Globals initialized')


globals_initialize()
