import numpy as np
import pytest

from app.schemas.channel import ScenarioConfig
from app.schemas.geometry import FeedLayout
from app.services.geometry import build_panel, phase_coupling

pytest_plugins = ('pytest_asyncio',)


@pytest.fixture(autouse=True)
def suppress_logging(monkeypatch):
    """Lower logging during tests to reduce noise."""
    import logging
    logging.getLogger().setLevel(logging.WARNING)
    yield


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


@pytest.fixture
def scenario():
    """Two users, two NLoS paths, default 30 GHz carrier."""
    return ScenarioConfig(num_users=2, num_nlos_paths=2)


@pytest.fixture
def small_panels(scenario):
    """4x4 transmit surface with 2x2 feeds and a 2x2 receive surface."""
    tx = build_panel(4, 2.5e-3, scenario.wavelength_m, FeedLayout.GRID, 2)
    rx = build_panel(2, 2.5e-3, scenario.wavelength_m)
    return tx, rx, phase_coupling(tx, rx)
