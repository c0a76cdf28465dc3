"""
Experiment API Router

This module provides the experiment endpoints of the CDLab service. Requests carry a
RunConfig body, the same record the command line reads from `--config` files.

Routes:
    /stability (POST): Rate table and rate fit of a perturbation family
    /resolution (POST): Relative change of a family table between n and 2n

Author: CDLab developers
Contact: CDLab issue tracker
Maintained by: CDLab maintainers
Version: 1.0.0
"""

import logging

from fastapi import APIRouter, HTTPException

from cdlab_core import run_or_422
from cdlab_experiments import family_law, fit_rate, resolution_check, run_family
from cdlab_result import RunConfig

logger = logging.getLogger(__name__)

experiment_api_endpoint_router = APIRouter(prefix="/experiment/api", tags=["experiment"])


def _require_family(config: RunConfig):
    if not config.family:
        logger.warning('Experiment request without a family')
        raise HTTPException(status_code=422, detail="RunConfig.family is required")


@experiment_api_endpoint_router.post("/stability")
def stability(config: RunConfig):
    """
    Run a perturbation family.

    Args:
        config (RunConfig): family, deltas, n, N and psi are read

    Returns:
        dict: The rate table, its pass flag and the rate fit (null when the table cannot be fitted)
    """
    _require_family(config)
    logger.info(f'Stability request for family {config.family}')
    table = run_or_422(run_family, config.family, config.deltas, config.n, config.N, config.psi)
    try:
        fit = fit_rate(table, config.law or family_law(table.family)).get_dict()
    except ValueError as e:
        logger.info(f'No rate fit for {table.family}: {e}')
        fit = None
    return {'table': table.get_dict(), 'passed': table.passed, 'fit': fit}


@experiment_api_endpoint_router.post("/resolution")
def resolution(config: RunConfig):
    """
    Rerun a perturbation family at twice the resolution.

    Returns:
        dict: ResolutionReport fields
    """
    _require_family(config)
    logger.info(f'Resolution request for family {config.family}')
    return run_or_422(resolution_check, config.family, config.deltas, config.n, config.N, config.psi).get_dict()
