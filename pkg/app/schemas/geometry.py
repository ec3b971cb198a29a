import enum

from pydantic import BaseModel, ConfigDict, PositiveFloat, PositiveInt


class FeedLayout(str, enum.Enum):
    GRID = "grid"
    CENTER = "center"


class PanelSpec(BaseModel):
    """JSON description of a surface panel; the wavelength comes from the scenario."""
    model_config = ConfigDict(frozen=True)

    rows: PositiveInt
    spacing_m: PositiveFloat
    feed_layout: FeedLayout = FeedLayout.CENTER
    feed_grid_side: PositiveInt = 1
    refractive_index: PositiveFloat = 1.0
