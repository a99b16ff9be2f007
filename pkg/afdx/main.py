"""
afd-explorer - FastAPI Application Entry Point

    uvicorn afdx.main:app
"""
import logging

from fastapi import FastAPI, Request
from fastapi.middleware.cors import CORSMiddleware
from fastapi.responses import JSONResponse

from afdx import __version__
from afdx.api import evaluations, scenarios
from afdx.config import configure_logging, get_settings
from afdx.exceptions import AfdxError, ScenarioError

settings = get_settings()
configure_logging(settings.log_level)
logger = logging.getLogger(__name__)

app = FastAPI(
    title=settings.app_name,
    description="Design-space explorer for disaggregated LLM serving",
    version=__version__,
    docs_url="/api/docs",
    redoc_url="/api/redoc",
    openapi_url="/api/openapi.json",
    redirect_slashes=False,
)


@app.exception_handler(ScenarioError)
async def scenario_error_handler(request: Request, exc: ScenarioError):
    logger.info("Rejected scenario on %s: %s", request.url.path, exc)
    return JSONResponse(
        status_code=422,
        content={"detail": [d.model_dump() for d in exc.diagnostics]},
    )


@app.exception_handler(AfdxError)
async def afdx_error_handler(request: Request, exc: AfdxError):
    logger.warning("Request on %s failed: %s", request.url.path, exc)
    return JSONResponse(status_code=400, content={"detail": str(exc)})


app.add_middleware(
    CORSMiddleware,
    allow_origins=settings.cors_origins,
    allow_credentials=True,
    allow_methods=["*"],
    allow_headers=["*"],
)

app.include_router(scenarios.router, prefix="/api/scenarios", tags=["Scenarios"])
app.include_router(evaluations.router, prefix="/api", tags=["Evaluation"])


@app.get("/health", tags=["Health"])
async def health_check():
    return {
        "status": "healthy",
        "service": settings.app_name,
        "version": __version__,
        "environment": settings.app_env,
    }
