"""
CDLab Codes Module

This module contains utility functions for generating reproducible run IDs and the
random substreams used by Monte-Carlo audits. Run IDs identify an output directory and
its summary; they are derived from the run configuration so the same configuration
always produces the same ID.

Key Components:
-------------
- create_run_id(): Builds a run ID from the configuration text and seed
- extract_seed_from_run_id(): Recovers the seed embedded in a run ID
- seed_substreams(): Independent numpy generators for parallel samples
- PREFIX_RUN_ID: Standard prefix for all run IDs

ID Format:
---------
The run IDs have the following format:
cdlab_<hash>_<encoded_seed>

Where:
- cdlab: Static prefix for all IDs
- hash: First 12 chars of the SHA256 hash of the configuration text
- encoded_seed: Hex encoded seed

Example ID:
cdlab_3f1a9c0b7d2e_1350a21

Usage:
-----
    run_id = create_run_id(config.to_text(), config.seed)
    seed = extract_seed_from_run_id(run_id)
    generators = seed_substreams(seed, 100)

Dependencies:
-----------
- hashlib: For SHA256 hashing
- numpy: For SeedSequence based substreams
- logging: For debug logging

Author: CDLab developers
Contact: CDLab issue tracker
Maintained by: CDLab maintainers
Version: 1.0.0
"""
import hashlib
import logging
import numpy as np

logger = logging.getLogger(__name__)

PREFIX_RUN_ID = 'cdlab'


def create_run_id(config_text: str, seed: int) -> str:
    """
    Creates a run ID combining a hash of the configuration and the encoded seed.

    The ID has three parts separated by underscores:
    1. The static prefix
    2. First 12 chars of SHA256 of the configuration text
    3. Hex encoded seed, so the seed can be read back from the ID

    Args:
        config_text (str): Canonical text of the run configuration
        seed (int): Non-negative seed of the run

    Returns:
        str: Run ID in the format described above

    Raises:
        ValueError: If the seed is negative

    Example:
        >>> create_run_id('command = constants\\n', 7)
        'cdlab_<12 hex chars>_7'
    """
    if seed < 0:
        logger.error(f'Seed must be non-negative, got {seed}')
        raise ValueError('Seed must be non-negative')
    hashed_config = hashlib.sha256(config_text.encode('utf-8')).hexdigest()[:12]
    run_id = f'{PREFIX_RUN_ID}_{hashed_config}_{seed:x}'
    logger.debug(f'Created run ID: {run_id}')
    return run_id


def extract_seed_from_run_id(run_id: str) -> int:
    """
    Extracts the seed from a run ID.

    Args:
        run_id (str): The run ID to read

    Returns:
        int: The seed the run was created with

    Raises:
        ValueError: If the run ID format is invalid (doesn't have 3 underscore-separated parts)
    """
    parts = run_id.split('_')
    if len(parts) != 3 or parts[0] != PREFIX_RUN_ID:
        logger.error(f'Invalid run ID format: {run_id}')
        raise ValueError('Invalid run ID format')
    return int(parts[2], 16)


def seed_substreams(seed: int, count: int) -> list[np.random.Generator]:
    """
    Derives independent deterministic generators, one per sample.

    Sample i always receives the same stream for a given seed, whatever the
    order in which samples are executed.

    Args:
        seed (int): Root seed
        count (int): Number of substreams

    Returns:
        list[np.random.Generator]: One generator per sample
    """
    children = np.random.SeedSequence(seed).spawn(count)
    return [np.random.default_rng(child) for child in children]
