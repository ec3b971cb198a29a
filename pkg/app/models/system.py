from dataclasses import dataclass

import numpy as np

from app.core.errors import ShapeError

_BOX_TOL = 1e-9


@dataclass(frozen=True)
class BeampatternState:
    """Long-term variables: BS amplitudes alpha (N,) and UE amplitudes V (M, U)."""
    alpha: np.ndarray
    v: np.ndarray

    def __post_init__(self) -> None:
        if self.alpha.ndim != 1 or self.v.ndim != 2:
            raise ShapeError("alpha must be a vector and v a matrix")
        if not self.in_box(_BOX_TOL):
            raise ValueError("amplitudes must lie in [0, 1]")

    @property
    def num_users(self) -> int:
        return int(self.v.shape[1])

    def in_box(self, slack: float = 0.0) -> bool:
        return bool(
            np.all(self.alpha >= -slack) and np.all(self.alpha <= 1.0 + slack)
            and np.all(self.v >= -slack) and np.all(self.v <= 1.0 + slack)
        )


@dataclass(frozen=True)
class Precoder:
    w: np.ndarray  # (K, U) complex

    @classmethod
    def zeros(cls, num_feeds: int, num_users: int) -> "Precoder":
        return cls(np.zeros((num_feeds, num_users), dtype=complex))


@dataclass(frozen=True)
class QosSpec:
    delta: np.ndarray  # (U,) bits/s/Hz
    sigma2: float  # watts

    def __post_init__(self) -> None:
        if np.any(np.asarray(self.delta) < 0):
            raise ValueError("QoS thresholds must be non-negative")
        if not self.sigma2 > 0:
            raise ValueError("noise power must be positive")

    @property
    def eta(self) -> np.ndarray:
        return np.exp2(np.asarray(self.delta, dtype=float)) - 1.0
