from fastapi import FastAPI, Request, status
from fastapi.exceptions import RequestValidationError
from fastapi.middleware.cors import CORSMiddleware
from fastapi.responses import JSONResponse
from starlette.exceptions import HTTPException as StarletteHTTPException
from contextlib import asynccontextmanager
from typing import Optional
import logging

from .api.routes import initialize_services, router, shutdown_services
from .rewriter.errors import RewriterError
from .services.config import ServiceConfig
from .services.registry import RegistryError, RegistryService

logger = logging.getLogger(__name__)


def error_body(message: str, code: str) -> dict:
    return {"error": message, "code": code}


def create_app(config: Optional[ServiceConfig] = None,
               registry: Optional[RegistryService] = None) -> FastAPI:
    """
    Build the registry application

    Tests pass a ready RegistryService; otherwise one is opened from the
    configured data directory at startup.
    """

    @asynccontextmanager
    async def lifespan(app: FastAPI):
        logger.info("=" * 80)
        logger.info("Starting Mosaic hardened variant registry")
        logger.info("=" * 80)
        try:
            initialize_services(config, registry)
            logger.info("✓ Application startup complete")
        except Exception as e:
            logger.error(f"✗ Application startup failed: {e}")
            raise

        yield

        logger.info("Shutting down registry...")
        shutdown_services()

    app = FastAPI(
        title="Mosaic Variant Registry",
        description="Hardened registry serving a fresh diversified variant per request",
        version="1.0.0",
        lifespan=lifespan,
    )

    app.add_middleware(
        CORSMiddleware,
        allow_origins=["*"],
        allow_methods=["*"],
        allow_headers=["*"],
    )

    @app.exception_handler(RegistryError)
    async def registry_error_handler(request: Request, exc: RegistryError):
        if exc.status >= 500 and exc.code != "pool_exhausted":
            logger.error(f"✗ {request.method} {request.url.path}: {exc}")
        return JSONResponse(status_code=exc.status, content=error_body(str(exc), exc.code))

    @app.exception_handler(RewriterError)
    async def rewriter_error_handler(request: Request, exc: RewriterError):
        return JSONResponse(status_code=status.HTTP_400_BAD_REQUEST,
                            content=error_body(str(exc), "invalid_request"))

    @app.exception_handler(RequestValidationError)
    async def validation_error_handler(request: Request, exc: RequestValidationError):
        details = "; ".join(
            f"{'.'.join(str(p) for p in err['loc'])}: {err['msg']}" for err in exc.errors()
        )
        return JSONResponse(status_code=status.HTTP_422_UNPROCESSABLE_ENTITY,
                            content=error_body(details or "invalid request", "invalid_request"))

    @app.exception_handler(StarletteHTTPException)
    async def http_error_handler(request: Request, exc: StarletteHTTPException):
        code = "unavailable" if exc.status_code == 503 else "not_found" if exc.status_code == 404 else "http_error"
        return JSONResponse(status_code=exc.status_code, content=error_body(str(exc.detail), code))

    app.include_router(router)

    @app.get("/")
    async def root():
        """Root endpoint"""
        return {
            "message": "Mosaic Variant Registry API",
            "version": "1.0.0",
            "docs": "/docs",
            "health": "/healthz",
        }

    return app


app = create_app()


if __name__ == "__main__":
    import uvicorn

    settings = ServiceConfig()
    logging.basicConfig(level=settings.log_level, format="%(asctime)s %(levelname)s %(name)s: %(message)s")
    uvicorn.run(
        "app.main:app",
        host=settings.get("server.host"),
        port=int(settings.get("server.port")),
        log_level=settings.log_level.lower(),
    )
