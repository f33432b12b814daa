from contextlib import asynccontextmanager

from fastapi import Depends, FastAPI

from paperpuf.config import get_settings
from paperpuf.db.database import check_store, close_store, get_store, init_store
from paperpuf.db.store import TemplateStore
from paperpuf.middleware import LoggingMiddleware
from paperpuf.middleware.logging import logger
from paperpuf.observability import initialize_tracing, shutdown_tracing
from paperpuf.routes import templates, verify
from paperpuf.routes.schemas import HealthResponse


# Get application settings
settings = get_settings()


@asynccontextmanager
async def lifespan(app: FastAPI):
    """
    Open the template store and start tracing on startup; release both on shutdown.
    """
    logger.info(f"Starting up {settings.app_name} v{settings.app_version}...")
    logger.info(f"Environment: {settings.app_env}")
    init_store()

    if check_store():
        logger.info(f"Template store ready at {settings.store_path}")
    else:
        logger.error(f"Template store at {settings.store_path} is not usable")

    initialize_tracing()

    yield

    logger.info("Shutting down...")
    shutdown_tracing()
    close_store()


app = FastAPI(
    title=settings.app_name,
    description=settings.app_description,
    version=settings.app_version,
    debug=settings.debug,
    lifespan=lifespan,
)

app.add_middleware(LoggingMiddleware)

app.include_router(templates.router)
app.include_router(verify.router)


@app.get("/health", response_model=HealthResponse)
async def health_check(store: TemplateStore = Depends(get_store)):
    """Store size and decision threshold."""
    return HealthResponse(status="healthy", templates=len(store), threshold=store.threshold)
