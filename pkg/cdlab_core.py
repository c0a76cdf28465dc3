"""
CDLab Core Module

This module provides the FastAPI application assembly of the CDLab service and the
helper translating laboratory errors into HTTP errors.

Key Components:
    - FastAPI application initialization
    - Parameter error mapping (ValueError -> 422)

Author: CDLab developers
Contact: CDLab issue tracker
Maintained by: CDLab maintainers
Version: 1.0.0
"""

import logging
from fastapi import FastAPI, APIRouter, HTTPException

logger = logging.getLogger(__name__)


def init_fastapi_app(app: FastAPI, routers: list[APIRouter]):
    """
    Create and configure FastAPI application.

    Args:
        app (FastAPI): The FastAPI application instance to configure
        routers (list[APIRouter]): List of FastAPI routers to include

    Returns:
        FastAPI: Configured FastAPI application instance
    """
    logger.info("Initializing FastAPI application with routers.")

    for router in routers:
        logger.info(f"Including router {router.prefix} with routes:")
        for route in router.routes:
            logger.info(f"  - {route.path} [{route.methods}]")
        app.include_router(router)

    logger.info("FastAPI application initialized successfully.")
    return app


def run_or_422(operation, *args, **kwargs):
    """
    Run a laboratory operation, turning parameter errors into HTTP 422.

    Raises:
        HTTPException: 422 when the operation raises ValueError
    """
    try:
        return operation(*args, **kwargs)
    except ValueError as e:
        logger.warning(f'Rejected parameters for {operation.__name__}: {e}')
        raise HTTPException(status_code=422, detail=str(e))
