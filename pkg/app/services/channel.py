"""Statistical CSI and Saleh-Valenzuela channel draws for the downlink."""

from typing import Protocol, Sequence

import numpy as np

from app.core.logger import get_logger
from app.core.seeding import Stream, substream
from app.models.channel import ChannelRealization, PathAngles, StatisticalCsi
from app.models.geometry import SurfacePanel
from app.schemas.channel import ScenarioConfig

logger = get_logger(__name__)


def _planar_steering(panel: SurfacePanel, first: float, second: float) -> np.ndarray:
    idx = np.arange(panel.rows)
    ii, jj = np.meshgrid(idx, idx, indexing="ij")
    k = panel.free_space_wavenumber
    phase = k * panel.spacing * (ii * np.sin(first) * np.cos(second) + jj * np.cos(second))
    return np.exp(1j * phase.ravel())


def steering_vector_tx(panel: SurfacePanel, theta: float, psi: float) -> np.ndarray:
    return _planar_steering(panel, theta, psi)


def steering_vector_rx(panel: SurfacePanel, omega: float, phi: float) -> np.ndarray:
    return _planar_steering(panel, omega, phi)


def los_path_loss_db(d3d: float) -> float:
    if not d3d > 0:
        raise ValueError("3D distance must be positive")
    return 61.4 + 20.0 * np.log10(d3d)


def noise_power(noise_psd_dbm_hz: float, bandwidth_hz: float) -> float:
    """Thermal noise power in watts over the given bandwidth."""
    if not bandwidth_hz > 0:
        raise ValueError("bandwidth must be positive")
    return float(10.0 ** ((noise_psd_dbm_hz + 10.0 * np.log10(bandwidth_hz) - 30.0) / 10.0))


def watts_to_dbm(power_w: float) -> float:
    if power_w <= 0:
        return float("-inf")
    return float(10.0 * np.log10(power_w * 1000.0))


def _los_angles(dx: float, dy: float, dz: float) -> PathAngles:
    horizontal = np.hypot(dx, dy)
    azimuth = float(np.arctan2(dy, dx))
    elevation = float(np.arctan2(abs(dz), horizontal))
    arrival = float(np.angle(np.exp(1j * (azimuth + np.pi))))
    return PathAngles(theta=azimuth, psi=elevation, omega=arrival, phi=elevation)


def _draw_nlos_angles(scenario: ScenarioConfig, rng: np.random.Generator) -> PathAngles:
    az_lo, az_hi = scenario.nlos_azimuth_range_rad
    el_lo, el_hi = scenario.nlos_elevation_range_rad
    theta, omega = rng.uniform(az_lo, az_hi, size=2)
    psi, phi = rng.uniform(el_lo, el_hi, size=2)
    return PathAngles(theta=float(theta), psi=float(psi), omega=float(omega), phi=float(phi))


def draw_statistical_csi(scenario: ScenarioConfig, rng: np.random.Generator) -> list[StatisticalCsi]:
    """
    Drop users uniformly on a disk around the BS and derive per-user
    statistical CSI. NLoS angles are drawn once here and stay frozen for the
    long interval; only NLoS gains are redrawn per sample.
    """
    stats: list[StatisticalCsi] = []
    height_gap = scenario.bs_height_m - scenario.ue_height_m
    for u in range(scenario.num_users):
        radius = scenario.max_horizontal_distance_m * np.sqrt(rng.uniform())
        azimuth = rng.uniform(0.0, 2.0 * np.pi)
        x, y = radius * np.cos(azimuth), radius * np.sin(azimuth)
        d3d = float(np.hypot(radius, height_gap))

        amplitude = 10.0 ** (-los_path_loss_db(d3d) / 20.0)
        los_gain = complex(amplitude * np.exp(1j * rng.uniform(0.0, 2.0 * np.pi)))
        nlos = tuple(_draw_nlos_angles(scenario, rng) for _ in range(scenario.num_nlos_paths))

        stats.append(
            StatisticalCsi(
                los_gain=los_gain,
                los=_los_angles(x, y, -height_gap),
                nlos=nlos,
                nlos_std=float(np.sqrt(scenario.nlos_power_ratio) * amplitude),
                position=np.array([x, y, scenario.ue_height_m]),
                distance_3d=d3d,
            )
        )
        logger.debug("User %s at d3d=%.3f m, LoS amplitude=%.3e", u, d3d, amplitude)
    return stats


def _outer(tx: SurfacePanel, rx: SurfacePanel, angles: PathAngles) -> np.ndarray:
    a_t = steering_vector_tx(tx, angles.theta, angles.psi)
    a_r = steering_vector_rx(rx, angles.omega, angles.phi)
    return np.outer(a_r, a_t.conj())


def sample_user_channel(
    stat: StatisticalCsi,
    tx: SurfacePanel,
    rx: SurfacePanel,
    rng: np.random.Generator,
) -> np.ndarray:
    h = stat.los_gain * _outer(tx, rx, stat.los)
    for angles in stat.nlos:
        gain = stat.nlos_std * (rng.standard_normal() + 1j * rng.standard_normal()) / np.sqrt(2.0)
        h = h + gain * _outer(tx, rx, angles)
    return h


def sample_channel(
    stats: Sequence[StatisticalCsi],
    tx: SurfacePanel,
    rx: SurfacePanel,
    rng: np.random.Generator,
) -> ChannelRealization:
    """One instantaneous channel per user, drawn in user order from ``rng``."""
    return ChannelRealization(
        h=np.stack([sample_user_channel(stat, tx, rx, rng) for stat in stats])
    )


class ChannelSampler(Protocol):
    def draw(self, iteration: int, sample: int, attempt: int = 0) -> ChannelRealization:
        ...


class FreshSampler:
    """New channel samples every iteration, keyed by (iteration, sample, attempt)."""

    def __init__(
        self,
        stats: Sequence[StatisticalCsi],
        tx: SurfacePanel,
        rx: SurfacePanel,
        seed: int,
        stream: int = Stream.SAMPLES,
    ) -> None:
        self.stats = list(stats)
        self.tx = tx
        self.rx = rx
        self.seed = seed
        self.stream = int(stream)

    def draw(self, iteration: int, sample: int, attempt: int = 0) -> ChannelRealization:
        rng = substream(self.seed, self.stream, iteration, sample, attempt)
        return sample_channel(self.stats, self.tx, self.rx, rng)


class FrozenSampler:
    """Reuses the first iteration's sample set for the whole interval."""

    def __init__(self, base: FreshSampler) -> None:
        self.base = base
        self._cache: dict[tuple[int, int], ChannelRealization] = {}

    def draw(self, iteration: int, sample: int, attempt: int = 0) -> ChannelRealization:
        key = (sample, attempt)
        if key not in self._cache:
            self._cache[key] = self.base.draw(1, sample, attempt)
        return self._cache[key]


def draw_slots(
    stats: Sequence[StatisticalCsi],
    tx: SurfacePanel,
    rx: SurfacePanel,
    seed: int,
    num_slots: int,
    key: int = 0,
) -> list[ChannelRealization]:
    """Instantaneous channels of the evaluation slots of one long interval."""
    return [
        sample_channel(stats, tx, rx, substream(seed, Stream.EVAL, key, slot))
        for slot in range(num_slots)
    ]
