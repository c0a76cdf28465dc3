"""
CDLab Application Server

This module implements the FastAPI application server of the CDLab laboratory. It exposes
the audits and experiments of the command line as a JSON REST API.

It provides two API routes:

- /audit/api/: Constants, spectral gaps, curvature-dimension margins and the counterexample
- /experiment/api/: Perturbation family runs driven by a RunConfig body

Key Components:
    - FastAPI application server with REST API endpoints
    - Exception handlers logging request details
    - Health check endpoint

Environment Variables:
    PORT: Port the server listens on when run directly
    CDLAB_*: Laboratory defaults, see cdlab_globals

Usage:
    Run directly:
        $ PORT=5000 python app.py

Author: CDLab developers
Contact: CDLab issue tracker
Maintained by: CDLab maintainers
Version: 1.0.0
"""
import logging
import os

import uvicorn
from fastapi import FastAPI, Request
from fastapi.responses import JSONResponse
from starlette.exceptions import HTTPException as StarletteHTTPException

import cdlab_globals
from cdlab_core import init_fastapi_app
from routes.audit_api import audit_api_endpoint_router
from routes.experiment_api import experiment_api_endpoint_router

logger = logging.getLogger(__name__)

# Initialize FastAPI app
app = FastAPI(
    title="CDLab API",
    description="Curvature-dimension stability laboratory REST API",
    version="1.0.0"
)

logger.info('Initializing application with routers')
app = init_fastapi_app(app, [
    audit_api_endpoint_router,
    experiment_api_endpoint_router
])


def _log_request(request: Request, status_code: int, exc: Exception):
    logger.error(f"""
    {status_code} Error Details:
    URL: {request.url}
    Method: {request.method}
    Client Host: {request.client.host if request.client else 'unknown'}
    Path Params: {request.path_params}
    Query Params: {request.query_params}
    ---
    Full Exception: {exc}
    """)


@app.exception_handler(StarletteHTTPException)
async def http_exception_handler(request: Request, exc: StarletteHTTPException):
    """
    Handle HTTP exceptions and log request details
    """
    _log_request(request, exc.status_code, exc)
    return JSONResponse(
        status_code=exc.status_code,
        content=exc.detail if isinstance(exc.detail, dict) else {
            "error": exc.detail if exc.detail else "Not Found",
            "message": str(exc.detail) if exc.detail else "",
            "path": str(request.url),
            "method": request.method
        }
    )


@app.exception_handler(Exception)
async def unexpected_exception_handler(request: Request, exc: Exception):
    """
    Handle solver failures and other unexpected errors as HTTP 500
    """
    _log_request(request, 500, exc)
    return JSONResponse(
        status_code=500,
        content={
            "error": "Internal error",
            "message": str(exc),
            "path": str(request.url),
            "method": request.method
        }
    )


@app.get("/ping")
async def ping():
    """
    Health check endpoint to verify server status.

    Returns:
        dict: Response indicating the server is alive and the configured defaults
    """
    logger.info('Ping request received')
    return {
        "status": "pong",
        "default_resolution": cdlab_globals.DEFAULT_RESOLUTION,
        "workers": cdlab_globals.WORKERS
    }


# If run with python app.py, start the server
if __name__ == '__main__':
    PORT = os.getenv('PORT')
    if not PORT:
        logger.error("PORT environment variable is not set")
        raise ValueError("PORT environment variable is not set")
    logger.info(f'Starting FastAPI server on port {PORT}')
    uvicorn.run("app:app", host='0.0.0.0', port=int(PORT))
