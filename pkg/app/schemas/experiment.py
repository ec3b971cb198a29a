import enum
import hashlib
from pathlib import Path
from typing import Optional, Union

from pydantic import BaseModel, ConfigDict, Field, NonNegativeFloat, PositiveFloat, PositiveInt, field_validator, model_validator

from app.models.cssca import InitMode
from app.models.quantization import ComplexMode
from app.schemas.channel import ScenarioConfig
from app.schemas.geometry import FeedLayout, PanelSpec


class BaselineName(str, enum.Enum):
    AO = "ao"
    OTS = "ots"
    TTS_FIXED = "tts_fixed"
    RANDOM_AMPLITUDE = "random_amplitude"
    SDMA = "sdma"


class CsscaSettings(BaseModel):
    model_config = ConfigDict(frozen=True)

    t_h: PositiveInt = 10
    eps0: PositiveFloat = 0.01
    eps_u: PositiveFloat = 0.01
    n_iter: PositiveInt = 300
    window: PositiveInt = 50
    threshold: PositiveFloat = 0.01
    init: InitMode = InitMode.RANDOM


class SolverSettings(BaseModel):
    model_config = ConfigDict(frozen=True)

    tol: PositiveFloat = 1e-8
    max_iters: PositiveInt = 200


class QuantSettings(BaseModel):
    model_config = ConfigDict(frozen=True)

    bits: list[PositiveInt] = Field(default_factory=lambda: [2, 3, 4, 6, 8, 16])
    mu: PositiveFloat = 255.0
    complex_mode: ComplexMode = ComplexMode.CARTESIAN


class AlternationSettings(BaseModel):
    """Per-slot alternation used by the AO-style baselines."""
    model_config = ConfigDict(frozen=True)

    max_rounds: PositiveInt = 30
    rel_tol: PositiveFloat = 1e-3


class ExperimentConfig(BaseModel):
    """Everything one harness run depends on. Units are part of the field names."""
    model_config = ConfigDict(frozen=True)

    profile: str = "custom"
    scenario: ScenarioConfig = Field(default_factory=ScenarioConfig)
    tx_panel: PanelSpec
    rx_panel: PanelSpec
    cssca: CsscaSettings = Field(default_factory=CsscaSettings)
    solver: SolverSettings = Field(default_factory=SolverSettings)
    alternation: AlternationSettings = Field(default_factory=AlternationSettings)
    delta: Union[NonNegativeFloat, list[NonNegativeFloat]] = 1.0
    delta_grid: list[NonNegativeFloat] = Field(default_factory=lambda: [0.5, 1.0, 2.0, 3.0])
    slots_per_interval: PositiveInt = 10
    seed: int = 0
    replications: PositiveInt = 1
    quant: QuantSettings = Field(default_factory=QuantSettings)
    baselines: list[BaselineName] = Field(default_factory=lambda: list(BaselineName))
    workers: PositiveInt = 1
    output_dir: str = "results"

    @field_validator("delta_grid")
    @classmethod
    def _non_empty_grid(cls, value: list[float]) -> list[float]:
        if not value:
            raise ValueError("delta_grid must contain at least one threshold")
        return value

    @model_validator(mode="after")
    def _check_users(self) -> "ExperimentConfig":
        if isinstance(self.delta, list) and len(self.delta) != self.scenario.num_users:
            raise ValueError("per-user delta must have one entry per user")
        if self.rx_panel.feed_layout != FeedLayout.CENTER:
            raise ValueError("receive panel must use the center feed layout")
        return self

    def config_hash(self) -> str:
        payload = self.model_dump_json(exclude={"output_dir"})
        return hashlib.sha256(payload.encode("utf-8")).hexdigest()[:16]


PROFILES: dict[str, ExperimentConfig] = {
    "table1": ExperimentConfig(
        profile="table1",
        scenario=ScenarioConfig(num_users=4, num_nlos_paths=2),
        tx_panel=PanelSpec(rows=16, spacing_m=2.5e-3, feed_layout=FeedLayout.GRID, feed_grid_side=3),
        rx_panel=PanelSpec(rows=6, spacing_m=2.5e-3),
        cssca=CsscaSettings(t_h=10, eps0=0.01, eps_u=0.01, n_iter=300, window=50),
        slots_per_interval=20,
        replications=5,
    ),
    "ci": ExperimentConfig(
        profile="ci",
        scenario=ScenarioConfig(num_users=2, num_nlos_paths=2),
        tx_panel=PanelSpec(rows=8, spacing_m=2.5e-3, feed_layout=FeedLayout.GRID, feed_grid_side=2),
        rx_panel=PanelSpec(rows=4, spacing_m=2.5e-3),
        cssca=CsscaSettings(t_h=4, eps0=0.01, eps_u=0.01, n_iter=60, window=20),
        slots_per_interval=10,
        replications=2,
    ),
}


def load_profile(name: str) -> ExperimentConfig:
    try:
        return PROFILES[name]
    except KeyError:
        raise KeyError(f"unknown profile '{name}' (available: {', '.join(sorted(PROFILES))})") from None


def load_config(path: Union[str, Path]) -> ExperimentConfig:
    return ExperimentConfig.model_validate_json(Path(path).read_text(encoding="utf-8"))


def with_overrides(config: ExperimentConfig, **overrides: Optional[object]) -> ExperimentConfig:
    """Copy of ``config`` with every non-None override applied and re-validated."""
    updates = {k: v for k, v in overrides.items() if v is not None}
    if not updates:
        return config
    data = config.model_dump()
    data.update(updates)
    return ExperimentConfig.model_validate(data)
