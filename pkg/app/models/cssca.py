import enum
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from app.models.system import BeampatternState, QosSpec


class InitMode(str, enum.Enum):
    RANDOM = "random"
    HOLOGRAM = "hologram"


@dataclass(frozen=True)
class CsscaConfig:
    t_h: int
    eps0: float
    eps_u: float
    n_iter: int
    qos: QosSpec
    window: int = 50
    threshold: float = 0.01
    init: InitMode = InitMode.RANDOM
    workers: int = 1
    solver_tol: Optional[float] = None
    solver_max_iters: Optional[int] = None

    def __post_init__(self) -> None:
        if self.t_h < 1:
            raise ValueError("t_h must be at least 1")
        if not (self.eps0 > 0 and self.eps_u > 0):
            raise ValueError("proximal constants must be positive")
        if self.n_iter < 1:
            raise ValueError("n_iter must be at least 1")
        if self.window < 1 or not self.threshold > 0:
            raise ValueError("convergence window and threshold must be positive")


@dataclass(frozen=True)
class SampleValues:
    """g_0, g_u and their gradients for one channel sample."""
    g0: float
    gu: np.ndarray  # (U,)
    d_alpha_g0: np.ndarray  # (N,)
    d_alpha_gu: np.ndarray  # (N, U)
    d_v_gu: np.ndarray  # (M, U)
    fallback: bool = False


@dataclass(frozen=True)
class SampleBatch:
    samples: tuple[SampleValues, ...]

    def __post_init__(self) -> None:
        if not self.samples:
            raise ValueError("batch needs at least one sample")

    def __len__(self) -> int:
        return len(self.samples)

    def _mean(self, name: str) -> np.ndarray:
        # fixed summation order so parallel and serial runs agree bit for bit
        total = np.array(getattr(self.samples[0], name), dtype=float, copy=True)
        for sample in self.samples[1:]:
            total = total + getattr(sample, name)
        return total / len(self.samples)

    @property
    def g0(self) -> float:
        return float(self._mean("g0"))

    @property
    def gu(self) -> np.ndarray:
        return self._mean("gu")

    @property
    def d_alpha_g0(self) -> np.ndarray:
        return self._mean("d_alpha_g0")

    @property
    def d_alpha_gu(self) -> np.ndarray:
        return self._mean("d_alpha_gu")

    @property
    def d_v_gu(self) -> np.ndarray:
        return self._mean("d_v_gu")

    @property
    def fallback_count(self) -> int:
        return sum(1 for s in self.samples if s.fallback)


@dataclass(frozen=True)
class CsscaState:
    """Iterate (alpha^{t-1}, V^{t-1}) plus the recursive value and gradient estimates."""
    t: int
    state: BeampatternState
    f0_hat: float
    fu_hat: np.ndarray  # (U,)
    grad_alpha_f0: np.ndarray  # (N,)
    grad_alpha_fu: np.ndarray  # (N, U)
    grad_v_fu: np.ndarray  # (M, U)

    @classmethod
    def initial(cls, state: BeampatternState) -> "CsscaState":
        n, (m, users) = state.alpha.shape[0], state.v.shape
        return cls(
            t=0,
            state=state,
            f0_hat=0.0,
            fu_hat=np.zeros(users),
            grad_alpha_f0=np.zeros(n),
            grad_alpha_fu=np.zeros((n, users)),
            grad_v_fu=np.zeros((m, users)),
        )


@dataclass(frozen=True)
class Surrogates:
    """
    Convex quadratic surrogates written as balls.

    Objective: f0 + g.(a - a0) + eps0 ||a - a0||^2, minimized through
    ||a - objective_center||. Constraint u: eps_u ||(a, v_u) - center_u||^2
    - eps_u radius_sq[u] <= 0.
    """
    expansion: BeampatternState
    scale: float
    f0: float
    grad_alpha_f0: np.ndarray
    eps0: float
    fu: np.ndarray
    grad_alpha_fu: np.ndarray
    grad_v_fu: np.ndarray
    eps_u: float
    objective_center: np.ndarray  # (N,)
    alpha_centers: np.ndarray  # (N, U)
    v_centers: np.ndarray  # (M, U)
    radius_sq: np.ndarray  # (U,)
    active: np.ndarray  # (U,) users whose threshold is positive

    def objective(self, alpha: np.ndarray) -> float:
        """Surrogate of f0 in the scaled (dimensionless) units."""
        step = alpha - self.expansion.alpha
        return float(self.f0 + self.grad_alpha_f0 @ step + self.eps0 * step @ step)

    def constraints(self, alpha: np.ndarray, v: np.ndarray) -> np.ndarray:
        da = alpha - self.expansion.alpha
        dv = v - self.expansion.v
        return (
            self.fu
            + da @ self.grad_alpha_fu
            + np.sum(self.grad_v_fu * dv, axis=0)
            + self.eps_u * (da @ da + np.sum(dv * dv, axis=0))
        )


@dataclass(frozen=True)
class SurrogateSolution:
    alpha: np.ndarray
    v: np.ndarray
    restored: bool = False


@dataclass(frozen=True)
class TrajectoryPoint:
    t: int
    rho: float
    gamma: float
    f0_hat_w: float
    f0_hat_dbm: float
    max_fu_hat: float
    restored: bool
    infeasible_count: int


@dataclass
class LongTermResult:
    state: BeampatternState
    trajectory: list[TrajectoryPoint] = field(default_factory=list)
    estimates: Optional[CsscaState] = None
    converged_at: Optional[int] = None
    infeasible_samples: int = 0
    restorations: int = 0

    @property
    def final_power_w(self) -> float:
        return self.trajectory[-1].f0_hat_w if self.trajectory else float("nan")
