"""Comparison schemes evaluated on the same slots as the long-term optimizer."""

from dataclasses import dataclass
from typing import Callable, Optional, Sequence

import numpy as np

from app.core.errors import InfeasibleError
from app.core.logger import get_logger
from app.models.channel import ChannelRealization, StatisticalCsi
from app.models.cssca import CsscaConfig, CsscaState, SampleBatch
from app.models.geometry import PhaseCoupling, SurfacePanel
from app.models.system import BeampatternState, Precoder, QosSpec
from app.schemas.results import BaselineResult
from app.services.channel import FreshSampler, FrozenSampler
from app.services.cssca import (
    LongTermOptimizer,
    build_surrogates,
    sample_values,
    solve_surrogate,
    update_estimates,
)
from app.services.evaluation import SlotOutcome, evaluate_slot, short_term_or_fallback, summarize
from app.services.precoder import build_instance, regularized_zf_precoder, zf_precoder
from app.services.system_model import transmit_power

logger = get_logger(__name__)

PrecoderStep = Callable[[BeampatternState, ChannelRealization], tuple[Precoder, bool]]


@dataclass(frozen=True)
class BaselineContext:
    """What every per-slot scheme shares: couplings, QoS, proximal constants, start point."""
    theta: np.ndarray
    beta: np.ndarray
    qos: QosSpec
    eps0: float
    eps_u: float
    initial: BeampatternState
    max_rounds: int = 30
    rel_tol: float = 1e-3
    solver_tol: Optional[float] = None
    solver_max_iters: Optional[int] = None

    @property
    def active(self) -> np.ndarray:
        users = self.initial.num_users
        return np.broadcast_to(np.asarray(self.qos.delta, dtype=float), (users,)) > 0


def socp_step(ctx: BaselineContext) -> PrecoderStep:
    def step(state: BeampatternState, channels: ChannelRealization) -> tuple[Precoder, bool]:
        return short_term_or_fallback(
            state, ctx.theta, ctx.beta, channels, ctx.qos, ctx.solver_tol, ctx.solver_max_iters
        )
    return step


def zf_step(ctx: BaselineContext) -> PrecoderStep:
    def step(state: BeampatternState, channels: ChannelRealization) -> tuple[Precoder, bool]:
        instance = build_instance(state, ctx.theta, ctx.beta, channels, ctx.qos)
        try:
            return zf_precoder(instance), True
        except InfeasibleError:
            return regularized_zf_precoder(instance), False
    return step


class SlotAlternation:
    """
    Alternates a precoder step with one deterministic SCA step on the
    beampatterns, using the slot's own channel as the single sample.

    A beampattern step is kept only if the re-solved power drops; the loop
    stops when the relative drop falls below ``rel_tol`` or after
    ``max_rounds`` alternations.
    """

    def __init__(self, ctx: BaselineContext, precoder_step: PrecoderStep, freeze_alpha: bool = False) -> None:
        self.ctx = ctx
        self.precoder_step = precoder_step
        self.freeze_alpha = freeze_alpha

    def beampattern_step(
        self,
        state: BeampatternState,
        precoder: Precoder,
        channels: ChannelRealization,
        power: float,
    ) -> BeampatternState:
        ctx = self.ctx
        values = sample_values(state, precoder, channels, ctx.theta, ctx.beta, ctx.qos)
        estimates = update_estimates(CsscaState.initial(state), SampleBatch((values,)), 1.0)
        surrogates = build_surrogates(
            estimates, ctx.eps0, ctx.eps_u, scale=power if power > 0 else 1.0, active=ctx.active
        )
        solution = solve_surrogate(
            surrogates, tol=ctx.solver_tol, max_iters=ctx.solver_max_iters, freeze_alpha=self.freeze_alpha
        )
        return BeampatternState(alpha=solution.alpha, v=solution.v)

    def run(
        self,
        state: BeampatternState,
        channels: ChannelRealization,
    ) -> tuple[BeampatternState, Precoder, bool]:
        ctx = self.ctx
        precoder, feasible = self.precoder_step(state, channels)
        power = transmit_power(state, precoder, ctx.theta)
        if power == 0.0:
            return state, precoder, feasible

        for round_ in range(1, ctx.max_rounds + 1):
            candidate = self.beampattern_step(state, precoder, channels, power)
            cand_precoder, cand_feasible = self.precoder_step(candidate, channels)
            cand_power = transmit_power(candidate, cand_precoder, ctx.theta)
            improves = (cand_feasible and not feasible) or (
                cand_feasible == feasible and cand_power < power
            )
            if not improves:
                logger.debug("alternation stopped after %s rounds (no improvement)", round_)
                break
            drop = (power - cand_power) / power if power > 0 else 0.0
            state, precoder, power, feasible = candidate, cand_precoder, cand_power, cand_feasible
            if 0.0 <= drop < ctx.rel_tol:
                logger.debug("alternation converged after %s rounds", round_)
                break
        return state, precoder, feasible


def _evaluate(
    name: str,
    ctx: BaselineContext,
    slots: Sequence[ChannelRealization],
    alternation: SlotAlternation,
    start: BeampatternState,
) -> BaselineResult:
    outcomes: list[SlotOutcome] = []
    state = start
    for channels in slots:
        # warm start from the previous slot's beampatterns
        state, precoder, feasible = alternation.run(state, channels)
        outcomes.append(evaluate_slot(state, precoder, channels, ctx.theta, ctx.beta, ctx.qos, feasible))
    return summarize(name, outcomes, ctx.qos)


def run_ao(slots: Sequence[ChannelRealization], ctx: BaselineContext) -> BaselineResult:
    """Alternating optimization with instantaneous CSI in every slot."""
    return _evaluate("ao", ctx, slots, SlotAlternation(ctx, socp_step(ctx)), ctx.initial)


def run_ots(slots: Sequence[ChannelRealization], ctx: BaselineContext) -> BaselineResult:
    """Optimize on the first slot only and keep (alpha, V, W) for the rest."""
    if not slots:
        raise ValueError("no slots to evaluate")
    state, precoder, feasible = SlotAlternation(ctx, socp_step(ctx)).run(ctx.initial, slots[0])
    outcomes = [
        evaluate_slot(state, precoder, channels, ctx.theta, ctx.beta, ctx.qos, feasible if i == 0 else True)
        for i, channels in enumerate(slots)
    ]
    return summarize("ots", outcomes, ctx.qos)


def run_tts_fixed_samples(
    stats: Sequence[StatisticalCsi],
    tx: SurfacePanel,
    rx: SurfacePanel,
    coupling: PhaseCoupling,
    config: CsscaConfig,
    seed: int,
    slots: Sequence[ChannelRealization],
    initial: Optional[BeampatternState] = None,
) -> BaselineResult:
    """The long-term loop with the first iteration's samples reused throughout."""
    sampler = FrozenSampler(FreshSampler(stats, tx, rx, seed))
    optimizer = LongTermOptimizer(config, stats, tx, rx, coupling, seed, sampler=sampler)
    result = optimizer.run(initial)
    return optimizer.evaluate(result.state, slots, name="tts_fixed")


def run_random_amplitude(
    slots: Sequence[ChannelRealization],
    ctx: BaselineContext,
    rng: np.random.Generator,
) -> BaselineResult:
    """alpha ~ U[0, 1] once per interval; V and W alternate per slot."""
    alpha = rng.uniform(0.0, 1.0, size=ctx.initial.alpha.shape[0])
    start = BeampatternState(alpha=alpha, v=ctx.initial.v.copy())
    alternation = SlotAlternation(ctx, socp_step(ctx), freeze_alpha=True)
    return _evaluate("random_amplitude", ctx, slots, alternation, start)


def run_sdma(slots: Sequence[ChannelRealization], ctx: BaselineContext) -> BaselineResult:
    """AO beampattern step with a zero-forcing precoder in every slot."""
    return _evaluate("sdma", ctx, slots, SlotAlternation(ctx, zf_step(ctx)), ctx.initial)
