from dataclasses import dataclass
from typing import Optional

import numpy as np

from app.core.errors import ShapeError
from app.models.conic import SolverStatus
from app.models.system import Precoder


@dataclass(frozen=True)
class ShortTermInstance:
    """Per-slot power minimization data.

    ``d_matrix`` is D = diag(alpha) Theta (N, K), ``eff_channels`` stacks the
    effective channels h_u as rows (U, N), ``eta`` = 2^delta - 1 and
    ``sigma_bar`` = ||v_u|| sigma.
    """
    d_matrix: np.ndarray
    eff_channels: np.ndarray
    eta: np.ndarray
    sigma_bar: np.ndarray

    def __post_init__(self) -> None:
        n, _ = self.d_matrix.shape
        users = self.eta.shape[0]
        if self.eff_channels.shape != (users, n) or self.sigma_bar.shape != (users,):
            raise ShapeError("effective channels / sigma_bar do not match D and eta")
        if np.any(self.eta < 0):
            raise ValueError("eta must be non-negative")
        if np.any(self.sigma_bar <= 0):
            raise ValueError("sigma_bar must be positive")

    @property
    def num_users(self) -> int:
        return int(self.eta.shape[0])

    @property
    def num_feeds(self) -> int:
        return int(self.d_matrix.shape[1])

    @property
    def gain_matrix(self) -> np.ndarray:
        """G with rows h_u^H D, shape (U, K)."""
        return self.eff_channels.conj() @ self.d_matrix

    def power(self, precoder: Precoder) -> float:
        return float(np.sum(np.abs(self.d_matrix @ precoder.w) ** 2))

    def sinr(self, precoder: Precoder) -> np.ndarray:
        amplitudes = self.gain_matrix @ precoder.w
        power = np.abs(amplitudes) ** 2
        signal = np.diag(power)
        interference = power.sum(axis=1) - signal
        return signal / (interference + self.sigma_bar ** 2)


@dataclass(frozen=True)
class ShortTermSolution:
    status: SolverStatus
    precoder: Optional[Precoder]
    power: float
    iterations: int = 0

    @property
    def is_optimal(self) -> bool:
        return self.status == SolverStatus.OPTIMAL and self.precoder is not None
