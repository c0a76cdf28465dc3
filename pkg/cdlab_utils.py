"""
CDLab Utils Module

This module contains utility functions shared across the CDLab laboratory, including:
- CSV artifact writing and reading with round-trip safe floats
- `key = value` configuration text parsing and rendering
- Comma-separated number list parsing for command line flags
- Fourth-order finite differences on uniform grids

Key Functions:
    write_csv(): Write rows to CSV with 17 significant digits
    read_csv(): Read a CSV artifact back into a DataFrame
    parse_config_text(): Parse `key = value` lines with `#` comments
    render_config_text(): Render a mapping as `key = value` lines
    parse_float_list(): Parse "1e-3,3e-3" into floats
    derivative_uniform(): Fourth-order first derivative on a uniform grid

Dependencies:
    pandas: CSV reading and writing
    python-dotenv: `key = value` parsing
    numpy: Finite differences

Usage:
    from cdlab_utils import write_csv, parse_config_text

    write_csv(rows, 'runs/beta_scaled.csv', columns)
    values = parse_config_text(open('run.cfg').read())

Author: CDLab developers
Contact: CDLab issue tracker
Maintained by: CDLab maintainers
Version: 1.0.0
"""

import io
import logging
from pathlib import Path

import numpy as np
import pandas as pd
from dotenv import dotenv_values

logger = logging.getLogger(__name__)

CSV_FLOAT_FORMAT = '%.17g'


def write_csv(rows: list[dict], path: str | Path, columns: list[str]) -> Path:
    """
    Write rows to an RFC-4180 style CSV file.

    Floats are written with 17 significant digits so doubles survive a round trip.
    Booleans are written as `true`/`false`. Column order is fixed by `columns`.

    Args:
        rows (list[dict]): Row dictionaries, extra keys are ignored
        path (str | Path): Destination file, parent directories are created
        columns (list[str]): Header, in order

    Returns:
        Path: The written path

    Example:
        >>> write_csv([{'a': 0.1, 'b': True}], 'out.csv', ['a', 'b'])
        PosixPath('out.csv')
    """
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    frame = pd.DataFrame([{key: row.get(key) for key in columns} for row in rows], columns=columns)
    for column in frame.columns:
        if frame[column].dtype == bool:
            frame[column] = frame[column].map({True: 'true', False: 'false'})
    frame.to_csv(path, index=False, float_format=CSV_FLOAT_FORMAT, lineterminator='\n')
    logger.info(f'Wrote {len(frame)} rows to {path}')
    return path


def read_csv(path: str | Path) -> pd.DataFrame:
    """
    Read a CSV artifact written by write_csv.

    Args:
        path (str | Path): File to read

    Returns:
        pd.DataFrame: Parsed table, `true`/`false` columns become booleans
    """
    frame = pd.read_csv(path, true_values=['true'], false_values=['false'], float_precision='round_trip')
    logger.debug(f'Read {len(frame)} rows from {path}')
    return frame


def parse_config_text(text: str) -> dict[str, str]:
    """
    Parse line-oriented `key = value` text with `#` comments.

    Args:
        text (str): Configuration text

    Returns:
        dict[str, str]: Keys mapped to raw string values, keys without a value are dropped
    """
    values = dotenv_values(stream=io.StringIO(text))
    parsed = {key.strip(): value.strip() for key, value in values.items() if value is not None}
    logger.debug(f'Parsed configuration keys: {sorted(parsed)}')
    return parsed


def render_config_text(values: dict[str, str], header: str = '') -> str:
    """
    Render a mapping as `key = value` lines, in insertion order.

    Args:
        values (dict[str, str]): Keys and already formatted values
        header (str): Optional comment placed on the first line

    Returns:
        str: UTF-8 text terminated by a newline
    """
    lines = [f'# {header}'] if header else []
    lines.extend(f'{key} = {value}' for key, value in values.items())
    return '\n'.join(lines) + '\n'


def parse_float_list(raw: str) -> list[float]:
    """
    Parse a comma-separated list of numbers.

    Args:
        raw (str): For example "1e-3,3e-3,1e-2"

    Returns:
        list[float]: Parsed values, in order

    Raises:
        ValueError: If an entry is not a number or the list is empty
    """
    items = [item.strip() for item in raw.split(',') if item.strip()]
    if not items:
        logger.error('Empty number list')
        raise ValueError('Empty number list')
    try:
        return [float(item) for item in items]
    except ValueError:
        logger.error(f'Invalid number list: {raw!r}')
        raise ValueError(f'Invalid number list: {raw!r}')


def format_float(value: float) -> str:
    """Round-trip safe text for a float."""
    return repr(float(value))


def derivative_uniform(values: np.ndarray, step: float) -> np.ndarray:
    """
    First derivative of samples on a uniform grid.

    Fourth-order central differences in the interior, second-order one-sided
    differences on the two nodes closest to each end.

    Args:
        values (np.ndarray): Samples f(s_i), at least 5 of them
        step (float): Grid spacing

    Returns:
        np.ndarray: Approximations of f'(s_i)
    """
    values = np.asarray(values, dtype=float)
    if values.size < 5:
        logger.error('derivative_uniform needs at least 5 samples')
        raise ValueError('derivative_uniform needs at least 5 samples')
    derivative = np.gradient(values, step, edge_order=2)
    derivative[2:-2] = (
        -values[4:] + 8.0 * values[3:-1] - 8.0 * values[1:-3] + values[:-4]
    ) / (12.0 * step)
    return derivative
