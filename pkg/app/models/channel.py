from dataclasses import dataclass, field

import numpy as np


@dataclass(frozen=True)
class PathAngles:
    """Departure (theta, psi) at the BS and arrival (omega, phi) at the UE, radians."""
    theta: float
    psi: float
    omega: float
    phi: float


@dataclass(frozen=True)
class StatisticalCsi:
    """Slow-varying descriptors of one user's channel over a long interval."""
    los_gain: complex
    los: PathAngles
    nlos: tuple[PathAngles, ...]
    nlos_std: float
    position: np.ndarray = field(default_factory=lambda: np.zeros(3))
    distance_3d: float = 0.0

    @property
    def num_nlos_paths(self) -> int:
        return len(self.nlos)


@dataclass(frozen=True)
class ChannelRealization:
    """One instantaneous channel per user: ``h[u]`` is the M x N matrix H_u."""
    h: np.ndarray  # (U, M, N) complex

    @property
    def num_users(self) -> int:
        return int(self.h.shape[0])

    @property
    def shape(self) -> tuple[int, int]:
        return int(self.h.shape[1]), int(self.h.shape[2])
