from typing import Optional

from pydantic import BaseModel, Field


class ReportBase(BaseModel):
    config_hash: str
    seed: int


class TrajectoryRow(ReportBase):
    delta: float
    t: int
    rho: float
    gamma: float
    f0_hat_w: float
    f0_hat_dbm: float
    max_fu_hat: float
    restored_flag: bool
    infeasible_count: int


class BaselineResult(BaseModel):
    name: str
    avg_power_watts: float = Field(ge=0.0)
    avg_power_dbm: float
    avg_se_per_user: list[float]
    qos_violation_rate: float = Field(ge=0.0, le=1.0)
    num_slots: int = Field(ge=0)
    infeasible_slots: int = Field(default=0, ge=0)


class ConvergenceRun(BaseModel):
    delta: float
    replication: int
    converged_power_w: float
    converged_power_dbm: float
    converged_at: Optional[int] = None
    infeasible_samples: int = 0
    restorations: int = 0


class ConvergenceSummary(ReportBase):
    profile: str
    window: int
    threshold: float
    runs: list[ConvergenceRun]


class ComparisonRow(ReportBase):
    delta: float
    replication: int
    scheme: str
    avg_power_watts: float
    avg_power_dbm: float
    mean_se: float
    qos_violation_rate: float
    infeasible_slots: int


class ComparisonSummary(ReportBase):
    delta: float
    replications: int
    mean_power_dbm: dict[str, float]
    results: list[ComparisonRow]


class QuantRow(ReportBase):
    replication: int
    bits: Optional[int]
    mode: str
    avg_power_watts: float
    avg_power_dbm: float
    power_gap_db: float
    mean_se: float
    se_gap: float
    qos_violation_rate: float


class CheckResult(BaseModel):
    name: str
    passed: bool
    detail: str = ""


class ValidationReport(BaseModel):
    passed: bool
    checks: list[CheckResult]

    @property
    def failures(self) -> list[CheckResult]:
        return [c for c in self.checks if not c.passed]
