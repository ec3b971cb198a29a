from typing import Callable, Optional

from fastapi import APIRouter, HTTPException, Path, status
from fastapi.concurrency import run_in_threadpool
from pydantic import BaseModel, Field, NonNegativeFloat, PositiveInt

from app.core.errors import HoloError
from app.core.logger import get_logger
from app.schemas.experiment import ExperimentConfig, load_profile, with_overrides
from app.schemas.results import ComparisonSummary, ConvergenceSummary, ValidationReport
from app.services.experiments import ExperimentService
from app.services.validation import run_validation

logger = get_logger(__name__)


class RunRequest(BaseModel):
    """Profile plus the overrides the CLI also accepts."""
    profile: str = "ci"
    seed: Optional[int] = None
    delta: Optional[list[NonNegativeFloat]] = None
    replications: Optional[PositiveInt] = None
    write_files: bool = False


class ValidateRequest(BaseModel):
    seed: int = 0
    points: PositiveInt = Field(default=20, le=100)
    instances: PositiveInt = Field(default=10, le=50)


class ExperimentRouter:
    """
    APIRouter that triggers harness runs. Runs are CPU bound, so each one
    executes in the threadpool.
    """

    def __init__(
        self,
        service_factory: Callable[[ExperimentConfig], ExperimentService] = ExperimentService,
        validator: Callable[..., ValidationReport] = run_validation,
    ) -> None:
        self.router = APIRouter(
            prefix="/experiments",
            tags=["experiments"],
        )
        self.service_factory = service_factory
        self.validator = validator
        self._register_routes()

    def _register_routes(self) -> None:
        self.router.get("/profiles/{name}", response_model=ExperimentConfig)(self.get_profile)
        self.router.post("/convergence", response_model=ConvergenceSummary)(self.run_convergence)
        self.router.post("/compare", response_model=ComparisonSummary)(self.run_compare)
        self.router.post("/validate", response_model=ValidationReport)(self.validate)

    def _config(self, body: RunRequest) -> ExperimentConfig:
        try:
            config = load_profile(body.profile)
        except KeyError as e:
            raise HTTPException(status_code=status.HTTP_404_NOT_FOUND, detail=str(e.args[0]))
        try:
            return with_overrides(
                config,
                seed=body.seed,
                delta_grid=body.delta,
                delta=body.delta[0] if body.delta else None,
                replications=body.replications,
            )
        except ValueError as e:
            raise HTTPException(status_code=status.HTTP_400_BAD_REQUEST, detail=str(e))

    async def get_profile(self, name: str = Path(..., description="table1 or ci")):
        """Return a built-in profile as JSON."""
        try:
            return load_profile(name)
        except KeyError as e:
            raise HTTPException(status_code=status.HTTP_404_NOT_FOUND, detail=str(e.args[0]))

    async def run_convergence(self, body: RunRequest):
        config = self._config(body)
        logger.info("HTTP convergence run profile=%s seed=%s", config.profile, config.seed)
        try:
            service = self.service_factory(config)
            return await run_in_threadpool(service.run_convergence, body.write_files)
        except (HoloError, ValueError) as e:
            raise HTTPException(status_code=status.HTTP_400_BAD_REQUEST, detail=str(e))

    async def run_compare(self, body: RunRequest):
        config = self._config(body)
        logger.info("HTTP compare run profile=%s seed=%s", config.profile, config.seed)
        try:
            service = self.service_factory(config)
            return await run_in_threadpool(service.run_compare, body.write_files)
        except (HoloError, ValueError) as e:
            raise HTTPException(status_code=status.HTTP_400_BAD_REQUEST, detail=str(e))

    async def validate(self, body: ValidateRequest):
        """Run the invariant checks at reduced counts."""
        return await run_in_threadpool(
            self.validator, seed=body.seed, points=body.points, instances=body.instances
        )
