"""Per-slot evaluation shared by the long-term optimizer and the baselines."""

from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from app.core.logger import get_logger
from app.models.channel import ChannelRealization
from app.models.system import BeampatternState, Precoder, QosSpec
from app.schemas.results import BaselineResult
from app.services.channel import watts_to_dbm
from app.services.precoder import build_instance, regularized_zf_precoder, solve_precoder
from app.services.system_model import spectral_efficiency_all, transmit_power

logger = get_logger(__name__)

QOS_SLACK = 1e-6


@dataclass(frozen=True)
class SlotOutcome:
    power: float
    se: np.ndarray  # (U,)
    feasible: bool = True


def short_term_or_fallback(
    state: BeampatternState,
    theta: np.ndarray,
    beta: np.ndarray,
    channels: ChannelRealization,
    qos: QosSpec,
    tol: Optional[float] = None,
    max_iters: Optional[int] = None,
) -> tuple[Precoder, bool]:
    """SOCP precoder, or the regularized ZF precoder when the slot is infeasible."""
    instance = build_instance(state, theta, beta, channels, qos)
    solution = solve_precoder(instance, tol=tol, max_iters=max_iters)
    if solution.is_optimal:
        return solution.precoder, True
    return regularized_zf_precoder(instance), False


def evaluate_slot(
    state: BeampatternState,
    precoder: Precoder,
    channels: ChannelRealization,
    theta: np.ndarray,
    beta: np.ndarray,
    qos: QosSpec,
    feasible: bool = True,
) -> SlotOutcome:
    return SlotOutcome(
        power=transmit_power(state, precoder, theta),
        se=spectral_efficiency_all(state, precoder, channels, theta, beta, qos),
        feasible=feasible,
    )


def summarize(name: str, outcomes: Sequence[SlotOutcome], qos: QosSpec) -> BaselineResult:
    if not outcomes:
        raise ValueError("no slots to summarize")
    powers = np.array([o.power for o in outcomes])
    se = np.stack([o.se for o in outcomes])
    delta = np.broadcast_to(np.asarray(qos.delta, dtype=float), se.shape[1:])
    violations = se < delta[None, :] - QOS_SLACK
    avg_power = float(powers.mean())
    result = BaselineResult(
        name=name,
        avg_power_watts=avg_power,
        avg_power_dbm=watts_to_dbm(avg_power),
        avg_se_per_user=[float(x) for x in se.mean(axis=0)],
        qos_violation_rate=float(violations.mean()),
        num_slots=len(outcomes),
        infeasible_slots=sum(1 for o in outcomes if not o.feasible),
    )
    logger.info(
        "%s: %s slots, power=%.3f dBm, violation rate=%.3f",
        name, result.num_slots, result.avg_power_dbm, result.qos_violation_rate,
    )
    return result
