"""
Long-term beampattern optimization by constrained stochastic successive
convex approximation.

Each iteration draws ``t_h`` channel samples, solves the short-term problem
on every sample at the current beampatterns, folds sample values and
gradients into recursive estimates, minimizes the convex surrogate and takes
a diminishing step towards its solution.
"""

import math
import dataclasses
from concurrent.futures import ThreadPoolExecutor
from typing import Callable, Optional, Sequence

import numpy as np
from scipy import sparse

from app.core.errors import SolverError
from app.core.logger import get_logger
from app.core.seeding import Stream, substream
from app.models.channel import ChannelRealization, StatisticalCsi
from app.models.cssca import (
    CsscaConfig,
    CsscaState,
    InitMode,
    LongTermResult,
    SampleBatch,
    SampleValues,
    SurrogateSolution,
    Surrogates,
    TrajectoryPoint,
)
from app.models.geometry import PhaseCoupling, SurfacePanel
from app.models.system import BeampatternState, Precoder, QosSpec
from app.schemas.results import BaselineResult
from app.services.channel import ChannelSampler, FreshSampler, watts_to_dbm
from app.services.conic_solver import ConeProgramBuilder, solve_socp
from app.services.evaluation import evaluate_slot, short_term_or_fallback, summarize
from app.services.geometry import direction_from_angles, holographic_amplitude
from app.services.precoder import build_instance, regularized_zf_precoder, solve_precoder
from app.services.system_model import effective_channels, sinr_from_amplitudes

logger = get_logger(__name__)

_LN2 = math.log(2.0)
_FLOOR = np.finfo(float).tiny


def step_sizes(t: int) -> tuple[float, float]:
    """rho^t = (1 + t)^(-2/3) for the estimates, gamma^t = 2 / (2 + t) for the iterate."""
    if t < 1:
        raise ValueError("iteration index starts at 1")
    return (1.0 + t) ** (-2.0 / 3.0), 2.0 / (2.0 + t)


# ---------------------------------------------------------------------------
# per-sample values and gradients
# ---------------------------------------------------------------------------

def _amplitude_terms(
    state: BeampatternState,
    precoder: Precoder,
    channels: ChannelRealization,
    theta: np.ndarray,
    beta: np.ndarray,
):
    fields = theta @ precoder.w  # (N, U) columns Theta w_u'
    heff = effective_channels(state, beta, channels)  # (U, N)
    q = heff.conj()[:, None, :] * fields.T[None, :, :]  # (U, U', N), a = q . alpha
    amplitudes = q @ state.alpha
    return fields, q, amplitudes


def sample_objective_and_constraints(
    state: BeampatternState,
    precoder: Precoder,
    channels: ChannelRealization,
    theta: np.ndarray,
    beta: np.ndarray,
    qos: QosSpec,
) -> tuple[float, np.ndarray]:
    """g_0 = transmit power, g_u = delta_u - log2(1 + SINR_u)."""
    fields, _, amplitudes = _amplitude_terms(state, precoder, channels, theta, beta)
    g0 = float(np.sum(np.abs(state.alpha[:, None] * fields) ** 2))
    se = np.log2(1.0 + sinr_from_amplitudes(amplitudes, state.v, qos.sigma2))
    return g0, np.asarray(qos.delta, dtype=float) - se


def sample_gradients(
    state: BeampatternState,
    precoder: Precoder,
    channels: ChannelRealization,
    theta: np.ndarray,
    beta: np.ndarray,
    qos: QosSpec,
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """
    Analytic gradients (d g0/d alpha, d g_u/d alpha, d g_u/d v_u).

    With T_u = sum_u' |a_uu'|^2 + ||v_u||^2 sigma^2 and D_u = T_u - |a_uu|^2,
    g_u = delta_u - (ln T_u - ln D_u) / ln 2. a_uu' is linear in alpha
    (coefficients q) and in v_u (coefficients r), so each |a|^2 term has
    gradient 2 Re(conj(a) coeff).
    """
    fields, q, amplitudes = _amplitude_terms(state, precoder, channels, theta, beta)
    users = amplitudes.shape[0]
    diag = np.arange(users)

    d_alpha_g0 = 2.0 * state.alpha * np.sum(np.abs(fields) ** 2, axis=1)

    power = np.abs(amplitudes) ** 2
    noise = np.sum(state.v ** 2, axis=0) * qos.sigma2
    total = np.maximum(power.sum(axis=1) + noise, _FLOOR)
    denom = np.maximum(total - power[diag, diag], _FLOOR)

    grad_terms_alpha = 2.0 * np.real(amplitudes.conj()[:, :, None] * q)  # (U, U', N)
    grad_total_alpha = grad_terms_alpha.sum(axis=1)
    grad_denom_alpha = grad_total_alpha - grad_terms_alpha[diag, diag]
    d_alpha_gu = -(grad_total_alpha / total[:, None] - grad_denom_alpha / denom[:, None]) / _LN2

    # r[u, u', m] = beta_m (H_u (alpha * Theta w_u'))_m, a_uu' = v_u . r[u, u']
    r = beta[None, None, :] * np.einsum("umn,nj->ujm", channels.h, state.alpha[:, None] * fields)
    grad_terms_v = 2.0 * np.real(amplitudes.conj()[:, :, None] * r)  # (U, U', M)
    noise_grad = 2.0 * qos.sigma2 * state.v.T  # (U, M)
    grad_total_v = grad_terms_v.sum(axis=1) + noise_grad
    grad_denom_v = grad_total_v - grad_terms_v[diag, diag]
    d_v_gu = -(grad_total_v / total[:, None] - grad_denom_v / denom[:, None]) / _LN2

    return d_alpha_g0, d_alpha_gu.T, d_v_gu.T


def sample_values(
    state: BeampatternState,
    precoder: Precoder,
    channels: ChannelRealization,
    theta: np.ndarray,
    beta: np.ndarray,
    qos: QosSpec,
    fallback: bool = False,
) -> SampleValues:
    g0, gu = sample_objective_and_constraints(state, precoder, channels, theta, beta, qos)
    d_alpha_g0, d_alpha_gu, d_v_gu = sample_gradients(state, precoder, channels, theta, beta, qos)
    return SampleValues(g0, gu, d_alpha_g0, d_alpha_gu, d_v_gu, fallback)


# ---------------------------------------------------------------------------
# recursive estimates and surrogates
# ---------------------------------------------------------------------------

def update_estimates(prev: CsscaState, batch: SampleBatch, rho: float) -> CsscaState:
    """f^t = (1 - rho) f^{t-1} + rho * batch mean, for every value and gradient estimate."""
    if not 0.0 <= rho <= 1.0:
        raise ValueError("rho must lie in [0, 1]")

    def blend(old, new):
        return (1.0 - rho) * old + rho * new

    return CsscaState(
        t=prev.t + 1,
        state=prev.state,
        f0_hat=float(blend(prev.f0_hat, batch.g0)),
        fu_hat=blend(prev.fu_hat, batch.gu),
        grad_alpha_f0=blend(prev.grad_alpha_f0, batch.d_alpha_g0),
        grad_alpha_fu=blend(prev.grad_alpha_fu, batch.d_alpha_gu),
        grad_v_fu=blend(prev.grad_v_fu, batch.d_v_gu),
    )


def build_surrogates(
    estimates: CsscaState,
    eps0: float,
    eps_u: float,
    scale: float = 1.0,
    active: Optional[np.ndarray] = None,
) -> Surrogates:
    """
    Complete the square of the proximal linearizations.

    The objective surrogate is divided by ``scale`` (a reference power) so
    that ``eps0`` acts on a dimensionless quantity.
    """
    if not (eps0 > 0 and eps_u > 0):
        raise ValueError("proximal constants must be positive")
    if not scale > 0:
        raise ValueError("objective scale must be positive")
    point = estimates.state
    f0 = estimates.f0_hat / scale
    g0 = estimates.grad_alpha_f0 / scale
    users = estimates.fu_hat.shape[0]

    grad_norm_sq = np.sum(estimates.grad_alpha_fu ** 2, axis=0) + np.sum(estimates.grad_v_fu ** 2, axis=0)
    return Surrogates(
        expansion=point,
        scale=scale,
        f0=f0,
        grad_alpha_f0=g0,
        eps0=eps0,
        fu=estimates.fu_hat.copy(),
        grad_alpha_fu=estimates.grad_alpha_fu.copy(),
        grad_v_fu=estimates.grad_v_fu.copy(),
        eps_u=eps_u,
        objective_center=point.alpha - g0 / (2.0 * eps0),
        alpha_centers=point.alpha[:, None] - estimates.grad_alpha_fu / (2.0 * eps_u),
        v_centers=point.v - estimates.grad_v_fu / (2.0 * eps_u),
        radius_sq=(grad_norm_sq / (4.0 * eps_u) - estimates.fu_hat) / eps_u,
        active=np.ones(users, dtype=bool) if active is None else np.asarray(active, dtype=bool),
    )


def _variable_layout(n: int, m: int, users: int) -> tuple[int, Callable[[int], np.ndarray]]:
    def user_index(u: int) -> np.ndarray:
        return np.concatenate([np.arange(n), n + m * u + np.arange(m)])
    return n + m * users, user_index


def _unpack(x: np.ndarray, n: int, m: int, users: int) -> tuple[np.ndarray, np.ndarray]:
    alpha = np.clip(x[:n], 0.0, 1.0)
    v = np.clip(x[n:n + m * users].reshape(users, m).T, 0.0, 1.0)
    return alpha, v


def _restore(
    surrogates: Surrogates,
    tol: Optional[float],
    max_iters: Optional[int],
    iteration: Optional[int],
) -> SurrogateSolution:
    """min_s s  s.t.  f_u(alpha, v_u) <= s for active users, box bounds."""
    n, (m, users) = surrogates.expansion.alpha.shape[0], surrogates.expansion.v.shape
    box_vars, user_index = _variable_layout(n, m, users)
    num_vars = box_vars + 1
    s_index = num_vars - 1
    eps = surrogates.eps_u
    builder = ConeProgramBuilder(num_vars)
    builder.add_box(0.0, 1.0, index=np.arange(box_vars))
    for u in np.flatnonzero(surrogates.active):
        idx = user_index(u)
        rows = sparse.lil_matrix((idx.shape[0] + 1, num_vars))
        rows[np.arange(idx.shape[0]), idx] = 2.0
        rows[idx.shape[0], s_index] = 1.0 / eps
        center = np.concatenate([surrogates.alpha_centers[:, u], surrogates.v_centers[:, u]])
        r2 = float(surrogates.radius_sq[u])
        lift = np.zeros(num_vars)
        lift[s_index] = 1.0 / eps
        builder.add_soc(rows.tocsr(), np.concatenate([-2.0 * center, [r2 - 1.0]]), lift, r2 + 1.0)
    objective = np.zeros(num_vars)
    objective[s_index] = 1.0
    solution = solve_socp(builder.build(objective), tol=tol, max_iters=max_iters)
    if not solution.is_optimal:
        raise SolverError(f"feasibility restoration ended with status {solution.status.value}", iteration=iteration)
    alpha, v = _unpack(solution.x, n, m, users)
    logger.warning("surrogate problem infeasible; restored point has max surrogate %.3e", solution.x[s_index])
    return SurrogateSolution(alpha=alpha, v=v, restored=True)


def solve_surrogate(
    surrogates: Surrogates,
    tol: Optional[float] = None,
    max_iters: Optional[int] = None,
    freeze_alpha: bool = False,
    iteration: Optional[int] = None,
) -> SurrogateSolution:
    """
    Minimize the objective surrogate over the box subject to every active
    constraint surrogate being non-positive. Falls back to minimizing the
    largest constraint surrogate when that set is empty.

    With ``freeze_alpha`` alpha stays at the expansion point and each v_u
    minimizes its own constraint surrogate over the box, which maximizes the
    worst-case margin since the users decouple.
    """
    point = surrogates.expansion
    n, (m, users) = point.alpha.shape[0], point.v.shape

    if freeze_alpha:
        v = np.clip(surrogates.v_centers, 0.0, 1.0)
        v[:, ~surrogates.active] = point.v[:, ~surrogates.active]
        return SurrogateSolution(alpha=point.alpha.copy(), v=v, restored=False)

    if not np.any(surrogates.active):
        return SurrogateSolution(
            alpha=np.clip(surrogates.objective_center, 0.0, 1.0), v=point.v.copy(), restored=False
        )
    if np.any(surrogates.radius_sq[surrogates.active] < 0):
        return _restore(surrogates, tol, max_iters, iteration)

    box_vars, user_index = _variable_layout(n, m, users)
    num_vars = box_vars + 1
    t_index = num_vars - 1
    builder = ConeProgramBuilder(num_vars)
    builder.add_box(0.0, 1.0, index=np.arange(box_vars))

    t_row = np.zeros(num_vars)
    t_row[t_index] = 1.0
    select_alpha = sparse.eye(n, num_vars, format="csr")
    builder.add_soc(select_alpha, -surrogates.objective_center, t_row, 0.0)

    for u in np.flatnonzero(surrogates.active):
        idx = user_index(u)
        rows = sparse.csr_matrix(
            (np.ones(idx.shape[0]), (np.arange(idx.shape[0]), idx)), shape=(idx.shape[0], num_vars)
        )
        center = np.concatenate([surrogates.alpha_centers[:, u], surrogates.v_centers[:, u]])
        builder.add_soc(rows, -center, np.zeros(num_vars), math.sqrt(surrogates.radius_sq[u]))

    solution = solve_socp(builder.build(t_row), tol=tol, max_iters=max_iters)
    if solution.is_optimal:
        alpha, v = _unpack(solution.x, n, m, users)
        return SurrogateSolution(alpha=alpha, v=v, restored=False)
    logger.debug("surrogate solve ended with status=%s; restoring", solution.status.value)
    return _restore(surrogates, tol, max_iters, iteration)


# ---------------------------------------------------------------------------
# the long-term loop
# ---------------------------------------------------------------------------

def convergence_iteration(values: Sequence[float], window: int, threshold: float) -> Optional[int]:
    """
    Convergence point of a trajectory judged on its tail.

    A window is flat when its values spread less than ``threshold`` relative
    to their mean. Returns the first 1-based index t such that every window
    ending at t or later is flat, or None when the final window is not.
    """
    data = np.asarray(values, dtype=float)
    if window < 1:
        raise ValueError("window must be positive")

    def flat(end: int) -> bool:
        chunk = data[end - window:end]
        mean = abs(float(chunk.mean()))
        spread = float(chunk.max() - chunk.min())
        return spread == 0.0 or (mean > 0 and spread / mean < threshold)

    converged = None
    for end in range(data.shape[0], window - 1, -1):
        if not flat(end):
            break
        converged = end
    return converged


class LongTermOptimizer:
    """
    Runs the stochastic long-term loop for one interval of statistical CSI.

    The sampler decides where channel samples come from: fresh draws every
    iteration by default, or a frozen set for the no-resampling variant.
    """

    def __init__(
        self,
        config: CsscaConfig,
        stats: Sequence[StatisticalCsi],
        tx: SurfacePanel,
        rx: SurfacePanel,
        coupling: PhaseCoupling,
        seed: int,
        sampler: Optional[ChannelSampler] = None,
    ) -> None:
        self.config = config
        self.stats = list(stats)
        self.tx = tx
        self.rx = rx
        self.theta = coupling.theta
        self.beta = coupling.beta
        self.seed = seed
        self.sampler = sampler or FreshSampler(self.stats, tx, rx, seed)
        self.active = np.broadcast_to(np.asarray(config.qos.delta, dtype=float), (len(self.stats),)) > 0

    # -- initialization -----------------------------------------------------

    def initial_state(self) -> BeampatternState:
        users = len(self.stats)
        if self.config.init == InitMode.HOLOGRAM:
            departures = np.stack([direction_from_angles(s.los.theta, s.los.psi) for s in self.stats])
            mean_direction = departures.sum(axis=0)
            alpha = holographic_amplitude(self.tx, mean_direction / np.linalg.norm(mean_direction))
            v = np.column_stack([
                holographic_amplitude(self.rx, direction_from_angles(s.los.omega, s.los.phi))
                for s in self.stats
            ])
            return BeampatternState(alpha=alpha, v=v)
        rng = substream(self.seed, Stream.INIT)
        alpha = rng.uniform(0.0, 1.0, size=self.tx.num_elements)
        v = rng.uniform(0.0, 1.0, size=(self.rx.num_elements, users))
        return BeampatternState(alpha=alpha, v=v)

    # -- one sample -----------------------------------------------------------

    def _sample(self, state: BeampatternState, iteration: int, sample: int) -> SampleValues:
        cfg = self.config
        for attempt in (0, 1):
            channels = self.sampler.draw(iteration, sample, attempt)
            instance = build_instance(state, self.theta, self.beta, channels, cfg.qos)
            solution = solve_precoder(instance, tol=cfg.solver_tol, max_iters=cfg.solver_max_iters)
            if solution.is_optimal:
                return sample_values(state, solution.precoder, channels, self.theta, self.beta, cfg.qos)
            logger.warning(
                "short-term problem %s at t=%s l=%s attempt=%s",
                solution.status.value, iteration, sample, attempt,
            )
        try:
            precoder = regularized_zf_precoder(instance)
        except np.linalg.LinAlgError as exc:
            raise SolverError(f"regularized ZF fallback failed: {exc}", iteration=iteration, sample=sample) from exc
        values = sample_values(state, precoder, channels, self.theta, self.beta, cfg.qos, fallback=True)
        if not (np.isfinite(values.g0) and np.all(np.isfinite(values.gu))):
            raise SolverError("fallback sample is not finite", iteration=iteration, sample=sample)
        return values

    def sample_batch(self, state: BeampatternState, iteration: int) -> SampleBatch:
        indices = range(self.config.t_h)
        if self.config.workers > 1:
            with ThreadPoolExecutor(max_workers=self.config.workers) as pool:
                samples = list(pool.map(lambda l: self._sample(state, iteration, l), indices))
        else:
            samples = [self._sample(state, iteration, l) for l in indices]
        return SampleBatch(tuple(samples))

    # -- main loop -------------------------------------------------------------

    def step(
        self,
        estimates: CsscaState,
        batch: SampleBatch,
        scale: float,
        freeze_alpha: bool = False,
    ) -> tuple[CsscaState, SurrogateSolution, BeampatternState]:
        """Fold in one batch, solve the surrogate and move the iterate."""
        t = estimates.t + 1
        rho, gamma = step_sizes(t)
        if t == 1:
            rho = 1.0
        updated = update_estimates(estimates, batch, rho)
        surrogates = build_surrogates(updated, self.config.eps0, self.config.eps_u, scale, self.active)
        solution = solve_surrogate(
            surrogates,
            tol=self.config.solver_tol,
            max_iters=self.config.solver_max_iters,
            freeze_alpha=freeze_alpha,
            iteration=t,
        )
        current = updated.state
        new_state = BeampatternState(
            alpha=np.clip((1.0 - gamma) * current.alpha + gamma * solution.alpha, 0.0, 1.0),
            v=np.clip((1.0 - gamma) * current.v + gamma * solution.v, 0.0, 1.0),
        )
        return dataclasses.replace(updated, state=new_state), solution, new_state

    def run(self, initial: Optional[BeampatternState] = None) -> LongTermResult:
        cfg = self.config
        state = initial if initial is not None else self.initial_state()
        estimates = CsscaState.initial(state)
        result = LongTermResult(state=state)
        scale = 1.0

        for t in range(1, cfg.n_iter + 1):
            rho, gamma = step_sizes(t)
            batch = self.sample_batch(state, t)
            if t == 1:
                scale = batch.g0 if batch.g0 > 0 else 1.0
                rho = 1.0
            estimates, solution, state = self.step(estimates, batch, scale)
            result.infeasible_samples += batch.fallback_count
            result.restorations += int(solution.restored)
            result.trajectory.append(
                TrajectoryPoint(
                    t=t,
                    rho=rho,
                    gamma=gamma,
                    f0_hat_w=estimates.f0_hat,
                    f0_hat_dbm=watts_to_dbm(estimates.f0_hat),
                    max_fu_hat=float(np.max(estimates.fu_hat)),
                    restored=solution.restored,
                    infeasible_count=batch.fallback_count,
                )
            )
            if t == 1 or t % 10 == 0 or t == cfg.n_iter:
                logger.info(
                    "cssca t=%s f0_hat=%.4e W (%.2f dBm) max_fu_hat=%.3e",
                    t, estimates.f0_hat, watts_to_dbm(estimates.f0_hat), float(np.max(estimates.fu_hat)),
                )

        result.state = state
        result.estimates = estimates
        result.converged_at = convergence_iteration(
            [p.f0_hat_w for p in result.trajectory], min(cfg.window, cfg.n_iter), cfg.threshold
        )
        return result

    # -- evaluation --------------------------------------------------------

    def evaluate(
        self,
        state: BeampatternState,
        slots: Sequence[ChannelRealization],
        name: str = "proposed",
    ) -> BaselineResult:
        """Frozen beampatterns, per-slot short-term solves on the given channels."""
        cfg = self.config

        def one(channels: ChannelRealization):
            precoder, feasible = short_term_or_fallback(
                state, self.theta, self.beta, channels, cfg.qos, cfg.solver_tol, cfg.solver_max_iters
            )
            return evaluate_slot(state, precoder, channels, self.theta, self.beta, cfg.qos, feasible)

        if cfg.workers > 1:
            with ThreadPoolExecutor(max_workers=cfg.workers) as pool:
                outcomes = list(pool.map(one, slots))
        else:
            outcomes = [one(channels) for channels in slots]
        return summarize(name, outcomes, cfg.qos)


def run_long_term(
    config: CsscaConfig,
    stats: Sequence[StatisticalCsi],
    tx: SurfacePanel,
    rx: SurfacePanel,
    coupling: PhaseCoupling,
    seed: int,
    sampler: Optional[ChannelSampler] = None,
) -> LongTermResult:
    return LongTermOptimizer(config, stats, tx, rx, coupling, seed, sampler).run()
