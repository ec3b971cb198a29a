import math

from pydantic import BaseModel, ConfigDict, Field, NonNegativeInt, PositiveFloat, PositiveInt, model_validator
from scipy.constants import speed_of_light


class ScenarioConfig(BaseModel):
    """Deployment and propagation parameters of one simulated cell."""
    model_config = ConfigDict(frozen=True)

    num_users: PositiveInt = 4
    bs_height_m: PositiveFloat = 25.0
    ue_height_m: PositiveFloat = 1.5
    max_horizontal_distance_m: PositiveFloat = 10.0
    num_nlos_paths: NonNegativeInt = 2
    carrier_frequency_hz: PositiveFloat = 30e9
    bandwidth_hz: PositiveFloat = 100e6
    noise_psd_dbm_hz: float = -169.0
    nlos_power_ratio: float = Field(default=0.1, ge=0.0)
    nlos_azimuth_range_rad: tuple[float, float] = (-math.pi / 2, math.pi / 2)
    nlos_elevation_range_rad: tuple[float, float] = (0.0, math.pi)

    @model_validator(mode="after")
    def _check_ranges(self) -> "ScenarioConfig":
        for name in ("nlos_azimuth_range_rad", "nlos_elevation_range_rad"):
            low, high = getattr(self, name)
            if low > high:
                raise ValueError(f"{name} must be an increasing pair")
        return self

    @property
    def wavelength_m(self) -> float:
        return speed_of_light / self.carrier_frequency_hz
