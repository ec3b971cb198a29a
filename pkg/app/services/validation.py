"""
Cross-module invariant checks run by ``validate``.

Each check builds its own small random instances from a fixed seed and
reports a ``CheckResult``; a failing or crashing check never stops the others.
"""

from typing import Callable, Optional

import numpy as np

from app.core.errors import InfeasibleError, OracleError
from app.core.logger import get_logger
from app.core.seeding import Stream, substream
from app.models.channel import ChannelRealization
from app.models.conic import SolverStatus
from app.models.cssca import CsscaConfig, CsscaState, SampleBatch
from app.models.precoder import ShortTermInstance
from app.models.quantization import QuantSpec
from app.models.system import BeampatternState, Precoder, QosSpec
from app.schemas.channel import ScenarioConfig
from app.schemas.geometry import FeedLayout
from app.schemas.results import CheckResult, ValidationReport
from app.services.channel import draw_statistical_csi, noise_power
from app.services.cssca import LongTermOptimizer, build_surrogates, sample_gradients, sample_objective_and_constraints, sample_values, update_estimates
from app.services.geometry import build_panel, phase_coupling
from app.services.precoder import duality_precoder, solve_precoder
from app.services.quantization import mu_law_quantize
from app.services.system_model import cross_amplitudes, received_amplitudes, transmit_power, transmit_power_trace

logger = get_logger(__name__)

GradientFn = Callable[..., tuple[np.ndarray, np.ndarray, np.ndarray]]

FD_STEP = 1e-6
GRADIENT_TOL = 1e-5


def _complex_normal(rng: np.random.Generator, *shape: int) -> np.ndarray:
    return (rng.standard_normal(shape) + 1j * rng.standard_normal(shape)) / np.sqrt(2.0)


def random_point(rng: np.random.Generator, n: int = 12, m: int = 4, k: int = 3, users: int = 2):
    """A random (state, W, H, Theta, beta, qos) tuple with unit-scale entries."""
    state = BeampatternState(alpha=rng.uniform(0.1, 0.9, n), v=rng.uniform(0.1, 0.9, (m, users)))
    precoder = Precoder(_complex_normal(rng, k, users))
    channels = ChannelRealization(h=_complex_normal(rng, users, m, n))
    theta = np.exp(1j * rng.uniform(0.0, 2.0 * np.pi, (n, k)))
    beta = np.exp(1j * rng.uniform(0.0, 2.0 * np.pi, m))
    qos = QosSpec(delta=rng.uniform(0.5, 2.0, users), sigma2=float(rng.uniform(0.5, 2.0)))
    return state, precoder, channels, theta, beta, qos


def _relative_error(analytic: np.ndarray, numeric: np.ndarray) -> float:
    return float(np.linalg.norm(analytic - numeric) / max(np.linalg.norm(numeric), 1e-300))


def finite_difference_gradients(state, precoder, channels, theta, beta, qos, step: float = FD_STEP):
    """Central differences of g_0 and g_u w.r.t. alpha and v_u."""
    n, (m, users) = state.alpha.shape[0], state.v.shape
    d_alpha_g0 = np.zeros(n)
    d_alpha_gu = np.zeros((n, users))
    d_v_gu = np.zeros((m, users))

    def values(alpha, v):
        return sample_objective_and_constraints(BeampatternState(alpha, v), precoder, channels, theta, beta, qos)

    for i in range(n):
        up, down = state.alpha.copy(), state.alpha.copy()
        up[i] += step
        down[i] -= step
        g0_up, gu_up = values(up, state.v)
        g0_down, gu_down = values(down, state.v)
        d_alpha_g0[i] = (g0_up - g0_down) / (2.0 * step)
        d_alpha_gu[i] = (gu_up - gu_down) / (2.0 * step)
    for j in range(m):
        for u in range(users):
            up, down = state.v.copy(), state.v.copy()
            up[j, u] += step
            down[j, u] -= step
            d_v_gu[j, u] = (values(state.alpha, up)[1][u] - values(state.alpha, down)[1][u]) / (2.0 * step)
    return d_alpha_g0, d_alpha_gu, d_v_gu


def check_gradients(seed: int, points: int = 100, gradient_fn: GradientFn = sample_gradients) -> CheckResult:
    rng = substream(seed, Stream.VALIDATION, 0)
    worst = 0.0
    for _ in range(points):
        point = random_point(rng)
        analytic = gradient_fn(*point)
        numeric = finite_difference_gradients(*point)
        worst = max(worst, *(_relative_error(a, b) for a, b in zip(analytic, numeric)))
    return CheckResult(name="gradients", passed=worst < GRADIENT_TOL, detail=f"max relative error {worst:.3e} over {points} points")


def check_power_identity(seed: int, points: int = 100) -> CheckResult:
    rng = substream(seed, Stream.VALIDATION, 1)
    worst = 0.0
    for _ in range(points):
        state, precoder, _, theta, _, _ = random_point(rng)
        total = transmit_power(state, precoder, theta)
        trace = transmit_power_trace(state, precoder, theta)
        worst = max(worst, abs(total - trace) / max(abs(trace), 1e-300))
    return CheckResult(name="power_identity", passed=worst <= 1e-10, detail=f"max relative gap {worst:.3e}")


def check_sinr_forms(seed: int, points: int = 100) -> CheckResult:
    rng = substream(seed, Stream.VALIDATION, 2)
    worst = 0.0
    for _ in range(points):
        state, precoder, channels, theta, beta, _ = random_point(rng)
        diag_form = cross_amplitudes(state, precoder, channels, theta, beta)
        matrix_form = received_amplitudes(state, precoder, channels, theta, beta)
        worst = max(worst, float(np.max(np.abs(diag_form - matrix_form)) / np.max(np.abs(matrix_form))))
    return CheckResult(name="sinr_forms", passed=worst <= 1e-12, detail=f"max relative gap {worst:.3e}")


def random_instance(rng: np.random.Generator, n: int = 6, k: int = 3, users: int = 2) -> ShortTermInstance:
    theta = np.exp(1j * rng.uniform(0.0, 2.0 * np.pi, (n, k)))
    return ShortTermInstance(
        d_matrix=rng.uniform(0.2, 1.0, n)[:, None] * theta,
        eff_channels=_complex_normal(rng, users, n),
        eta=rng.uniform(0.5, 3.0, users),
        sigma_bar=rng.uniform(0.5, 1.5, users),
    )


def check_socp_oracle(seed: int, instances: int = 50) -> list[CheckResult]:
    """SOCP optimum against the duality fixed point, plus constraint activeness."""
    rng = substream(seed, Stream.VALIDATION, 3)
    worst_power, worst_active, failures, oracle_failures = 0.0, 0.0, 0, 0
    for _ in range(instances):
        k = int(rng.integers(2, 4))
        users = int(rng.integers(1, 3))
        instance = random_instance(rng, n=int(rng.integers(k, 7)), k=k, users=users)
        solution = solve_precoder(instance)
        if not solution.is_optimal:
            failures += 1
            continue
        worst_active = max(worst_active, float(np.max(np.abs(instance.sinr(solution.precoder) / instance.eta - 1.0))))
        try:
            reference = instance.power(duality_precoder(instance))
        except (InfeasibleError, OracleError) as exc:
            logger.warning("duality oracle did not converge: %s", exc)
            oracle_failures += 1
            continue
        worst_power = max(worst_power, abs(solution.power - reference) / reference)
    return [
        CheckResult(
            name="socp_oracle",
            passed=failures == 0 and oracle_failures == 0 and worst_power <= 1e-3,
            detail=f"{failures} unsolved, {oracle_failures} oracle failures, max relative power gap {worst_power:.3e}",
        ),
        CheckResult(name="sinr_activeness", passed=failures == 0 and worst_active <= 1e-4, detail=f"max |SINR/eta - 1| {worst_active:.3e}"),
    ]


def check_colinear_infeasible() -> CheckResult:
    h = np.array([1.0, 0.5j, -0.25])
    instance = ShortTermInstance(
        d_matrix=np.eye(3, dtype=complex),
        eff_channels=np.vstack([h, h]),
        eta=np.ones(2),
        sigma_bar=np.ones(2),
    )
    status = solve_precoder(instance).status
    return CheckResult(name="colinear_infeasible", passed=status == SolverStatus.INFEASIBLE, detail=f"status {status.value}")


def check_quantizer() -> CheckResult:
    grid = np.linspace(0.0, 1.0, 2001)
    problems = []
    errors = []
    for bits in (1, 2, 3, 4, 6, 8, 16):
        spec = QuantSpec(bits=bits)
        once = mu_law_quantize(grid, spec)
        if not np.array_equal(mu_law_quantize(once, spec), once):
            problems.append(f"Q={bits} not idempotent")
        if np.any(np.diff(once) < 0):
            problems.append(f"Q={bits} not monotone")
        if once[0] != 0.0 or once[-1] != 1.0:
            problems.append(f"Q={bits} endpoints moved")
        errors.append(float(np.max(np.abs(once - grid))))
    if errors[-1] >= 1e-3:
        problems.append(f"Q=16 error {errors[-1]:.3e}")
    if errors[-1] >= errors[0]:
        problems.append("error does not shrink with more bits")
    return CheckResult(name="quantizer", passed=not problems, detail="; ".join(problems) or "ok")


def check_surrogate_consistency(seed: int) -> CheckResult:
    rng = substream(seed, Stream.VALIDATION, 4)
    state, precoder, channels, theta, beta, qos = random_point(rng)
    batch = SampleBatch((sample_values(state, precoder, channels, theta, beta, qos),))
    estimates = update_estimates(CsscaState.initial(state), batch, 1.0)
    scale = max(estimates.f0_hat, 1e-300)
    surrogates = build_surrogates(estimates, 0.01, 0.01, scale=scale)
    ok = (
        surrogates.objective(state.alpha) == estimates.f0_hat / scale
        and np.array_equal(surrogates.constraints(state.alpha, state.v), estimates.fu_hat)
    )
    return CheckResult(name="surrogate_consistency", passed=bool(ok), detail="expansion point reproduces the estimates")


def check_long_term_box(seed: int) -> CheckResult:
    scenario = ScenarioConfig(num_users=2, num_nlos_paths=1)
    tx = build_panel(4, 2.5e-3, scenario.wavelength_m, FeedLayout.GRID, 2)
    rx = build_panel(2, 2.5e-3, scenario.wavelength_m)
    stats = draw_statistical_csi(scenario, substream(seed, Stream.VALIDATION, 5))
    qos = QosSpec(delta=np.full(2, 1.0), sigma2=noise_power(scenario.noise_psd_dbm_hz, scenario.bandwidth_hz))
    config = CsscaConfig(t_h=2, eps0=0.01, eps_u=0.01, n_iter=3, qos=qos, window=2)
    result = LongTermOptimizer(config, stats, tx, rx, phase_coupling(tx, rx), seed).run()
    ok = result.state.in_box() and len(result.trajectory) == 3
    return CheckResult(name="long_term_box", passed=bool(ok), detail=f"{len(result.trajectory)} iterations")


def run_validation(
    seed: int = 0,
    points: int = 100,
    instances: int = 50,
    gradient_fn: Optional[GradientFn] = None,
) -> ValidationReport:
    suites = [
        lambda: [check_gradients(seed, points, gradient_fn or sample_gradients)],
        lambda: [check_power_identity(seed, points)],
        lambda: [check_sinr_forms(seed, points)],
        lambda: check_socp_oracle(seed, instances),
        lambda: [check_colinear_infeasible()],
        lambda: [check_quantizer()],
        lambda: [check_surrogate_consistency(seed)],
        lambda: [check_long_term_box(seed)],
    ]
    checks: list[CheckResult] = []
    for suite in suites:
        try:
            checks.extend(suite())
        except Exception as exc:  # noqa: BLE001
            logger.exception("validation suite crashed")
            checks.append(CheckResult(name="crashed", passed=False, detail=f"{type(exc).__name__}: {exc}"))
    for check in checks:
        log = logger.info if check.passed else logger.error
        log("check %-22s %s  %s", check.name, "PASS" if check.passed else "FAIL", check.detail)
    return ValidationReport(passed=all(c.passed for c in checks), checks=checks)
