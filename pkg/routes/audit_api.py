"""
Audit API Router

This module provides the read-only audit endpoints of the CDLab service. Every
response is the get_dict() of the corresponding report record.

Routes:
    /constants (GET): Explicit constants at dimension N
    /gap (GET): Spectral gap of a catalogue model
    /cd-check (GET): Curvature-dimension margin of a catalogue model
    /counterexample (GET): Gaussian counterexample ratio at radius r

Author: CDLab developers
Contact: CDLab issue tracker
Maintained by: CDLab maintainers
Version: 1.0.0
"""

import logging

import numpy as np
from fastapi import APIRouter

import cdlab_globals
from cdlab_cli import build_model
from cdlab_core import run_or_422
from cdlab_estimates import ou_counterexample
from cdlab_models import cd_margin
from cdlab_result import RunConfig
from cdlab_spectral import discretize, spectral_gap
from cdlab_stein import explicit_constants

logger = logging.getLogger(__name__)

audit_api_endpoint_router = APIRouter(prefix="/audit/api", tags=["audit"])


@audit_api_endpoint_router.get("/constants")
def constants(N: float):
    """
    Explicit constants at dimension N.

    Returns:
        dict: ExplicitConstants fields, absent constants as null
    """
    logger.info(f'Constants request for N={N}')
    return run_or_422(explicit_constants, N).get_dict()


@audit_api_endpoint_router.get("/gap")
def gap(model: str = 'jacobi', N: float | None = None, kappa: float | None = None, n: int | None = None,
        mapping: str | None = None):
    """
    Spectral gap and ε of a catalogue model.

    Returns:
        dict: GapResult fields without the eigenfunction values
    """
    logger.info(f'Gap request for model={model}, N={N}, n={n}')

    def compute():
        config = RunConfig(command='gap', model=model, N=N, kappa=kappa, n=n, mapping=mapping)
        op = discretize(build_model(config), n or cdlab_globals.DEFAULT_RESOLUTION, mapping)
        return spectral_gap(op)

    return run_or_422(compute).get_dict()


@audit_api_endpoint_router.get("/cd-check")
def cd_check(model: str = 'jacobi', N: float | None = None, kappa: float | None = None):
    """
    Curvature-dimension margin of a model at its own curvature and dimension.

    Returns:
        dict: min_margin, arg_min, rho, dim and the certification flag
    """
    logger.info(f'CD check request for model={model}, N={N}')

    def compute():
        built = build_model(RunConfig(command='cd-check', model=model, N=N, kappa=kappa))
        if built.is_finite:
            grid = np.linspace(-0.99, 0.99, 1001) * built.radius
        else:
            grid = np.linspace(-20.0, 20.0, 2001)
        return cd_margin(built, built.curvature, built.dim_param, grid)

    report = run_or_422(compute)
    return {**report.get_dict(), 'certified': report.certifies(1e-9)}


@audit_api_endpoint_router.get("/counterexample")
def counterexample(r: float):
    """
    Gaussian counterexample record at radius r.

    Returns:
        dict: CounterexampleRecord fields
    """
    logger.info(f'Counterexample request for r={r}')
    return run_or_422(ou_counterexample, r).get_dict()
