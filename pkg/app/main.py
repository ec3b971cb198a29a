from fastapi import FastAPI

from app.core.config import settings
from app.core.logger import configure_logging, get_logger

# Configure logging
configure_logging()
logger = get_logger(__name__)

from app.api.experiment_router import ExperimentRouter


experiment_router = ExperimentRouter()

app = FastAPI(
    title=settings.PROJECT_NAME,
    debug=settings.DEBUG,
)

app.include_router(experiment_router.router, prefix="/api/v1")


@app.get("/health")
async def health_check():
    return {"status": "ok"}
