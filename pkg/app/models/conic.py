import enum
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy import sparse


class SolverStatus(str, enum.Enum):
    OPTIMAL = "optimal"
    INFEASIBLE = "infeasible"
    UNBOUNDED = "unbounded"
    MAX_ITERS = "max_iters"


@dataclass(frozen=True)
class ConeDims:
    """Orthant size ``l`` followed by second-order cone block sizes ``q``."""
    l: int = 0
    q: tuple[int, ...] = ()

    @property
    def rows(self) -> int:
        return self.l + sum(self.q)

    @property
    def degree(self) -> int:
        return self.l + len(self.q)


@dataclass(frozen=True)
class SocpProblem:
    """
    minimize c^T x  s.t.  G x + s = h,  A x = b,  s in R+^l x Q^q1 x ... x Q^qk
    """
    c: np.ndarray
    G: sparse.csr_matrix
    h: np.ndarray
    dims: ConeDims
    A: sparse.csr_matrix
    b: np.ndarray

    def __post_init__(self) -> None:
        n = self.c.shape[0]
        if self.G.shape != (self.dims.rows, n) or self.h.shape != (self.dims.rows,):
            raise ValueError("G / h do not match the cone dimensions")
        if self.dims.rows < 1:
            raise ValueError("problem needs at least one cone constraint")
        if any(q < 1 for q in self.dims.q):
            raise ValueError("second-order cone blocks need at least one row")
        if self.A.shape != (self.b.shape[0], n):
            raise ValueError("A / b do not match the variable count")

    @property
    def num_vars(self) -> int:
        return int(self.c.shape[0])


@dataclass(frozen=True)
class SocpSolution:
    status: SolverStatus
    x: np.ndarray
    objective_value: float
    max_constraint_violation: float
    feasibility_tolerance: float
    iterations: int
    y: np.ndarray = field(default_factory=lambda: np.zeros(0))
    z: np.ndarray = field(default_factory=lambda: np.zeros(0))
    s: np.ndarray = field(default_factory=lambda: np.zeros(0))
    gap: Optional[float] = None

    @property
    def is_optimal(self) -> bool:
        return self.status == SolverStatus.OPTIMAL
