"""
FastAPI HTTP server for hsim-dml tools.

This module creates an HTTP API server that exposes the MCP tools as REST endpoints,
and mounts them as an MCP server over HTTP.
"""

import logging

from fastapi import FastAPI
from fastapi.middleware.cors import CORSMiddleware
from fastapi_mcp import FastApiMCP

from . import __version__
from .config import load_settings
from .routes.datasets import router as datasets_router
from .routes.experiments import router as experiments_router

logger = logging.getLogger(__name__)


def create_app() -> FastAPI:
    """Create and configure the FastAPI application."""

    # Create FastAPI app
    app = FastAPI(
        title="hsim-dml",
        description="HTTP API for hierarchical-margin metric learning experiments",
        version=__version__,
    )

    # Add CORS middleware
    app.add_middleware(
        CORSMiddleware,
        allow_origins=["*"],
        allow_credentials=True,
        allow_methods=["*"],
        allow_headers=["*"],
    )

    # Include routers
    app.include_router(datasets_router)
    app.include_router(experiments_router)

    # Health check endpoint
    @app.get("/health")
    async def health_check():
        """Health check endpoint."""
        return {"status": "healthy", "service": "hsim-dml"}

    return app


# Create app instance
app = create_app()

mcp = FastApiMCP(app)

# mount_http() for HTTP transport; mount_sse() for SSE transport instead.
mcp.mount_http()


def main() -> None:
    """Serve the HTTP API with uvicorn."""
    import uvicorn

    settings = load_settings()
    logging.basicConfig(level=getattr(logging, settings.log_level.upper(), logging.INFO))
    logger.info(f"Starting hsim-dml HTTP server on {settings.host}:{settings.port}")
    uvicorn.run(app, host=settings.host, port=settings.port)


if __name__ == "__main__":
    main()
