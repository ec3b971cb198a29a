"""
Unit tests for the long-term optimizer: step sizes, sample values and
gradients, recursive estimates, surrogates, the surrogate solve and the loop.
"""

import dataclasses

import numpy as np
import pytest

from app.core.errors import SolverError
from app.models.cssca import CsscaConfig, CsscaState, InitMode, SampleBatch
from app.models.system import BeampatternState, Precoder, QosSpec
from app.services import cssca
from app.services.channel import FreshSampler, FrozenSampler, draw_statistical_csi, noise_power
from app.services.cssca import (
    LongTermOptimizer,
    build_surrogates,
    convergence_iteration,
    run_long_term,
    sample_gradients,
    sample_objective_and_constraints,
    sample_values,
    solve_surrogate,
    step_sizes,
    update_estimates,
)
from app.services.system_model import transmit_power
from app.services.validation import finite_difference_gradients, random_point


def _relative_error(a, b):
    return np.linalg.norm(a - b) / max(np.linalg.norm(b), 1e-300)


def _estimates(alpha, v, f0=1.0, fu=None, g0=None, gau=None, gvu=None):
    alpha, v = np.asarray(alpha, dtype=float), np.asarray(v, dtype=float)
    n, (m, users) = alpha.shape[0], v.shape
    return CsscaState(
        t=1,
        state=BeampatternState(alpha=alpha, v=v),
        f0_hat=f0,
        fu_hat=np.zeros(users) if fu is None else np.asarray(fu, dtype=float),
        grad_alpha_f0=np.zeros(n) if g0 is None else np.asarray(g0, dtype=float),
        grad_alpha_fu=np.zeros((n, users)) if gau is None else np.asarray(gau, dtype=float),
        grad_v_fu=np.zeros((m, users)) if gvu is None else np.asarray(gvu, dtype=float),
    )


@pytest.fixture
def long_term_setup(small_panels, scenario):
    tx, rx, coupling = small_panels
    stats = draw_statistical_csi(scenario, np.random.default_rng(99))
    qos = QosSpec(delta=np.full(2, 1.0), sigma2=noise_power(scenario.noise_psd_dbm_hz, scenario.bandwidth_hz))
    config = CsscaConfig(t_h=2, eps0=0.01, eps_u=0.01, n_iter=3, qos=qos, window=2)
    return config, stats, tx, rx, coupling


# -- step sizes ---------------------------------------------------------------

def test_step_sizes_first_iteration():
    rho, gamma = step_sizes(1)
    assert rho == pytest.approx(2 ** (-2.0 / 3.0))
    assert rho == pytest.approx(0.6300, abs=1e-4)
    assert gamma == pytest.approx(2.0 / 3.0)


def test_step_sizes_decrease():
    assert step_sizes(6)[1] == pytest.approx(0.25)
    values = [step_sizes(t) for t in range(1, 200)]
    assert all(a[0] > b[0] and a[1] > b[1] for a, b in zip(values, values[1:]))
    assert step_sizes(10 ** 6)[0] < 1e-3


def test_step_sizes_reject_zero():
    with pytest.raises(ValueError):
        step_sizes(0)


# -- sample values and gradients ---------------------------------------------

def test_zero_precoder_values(rng):
    state, precoder, channels, theta, beta, qos = random_point(rng)
    zero = Precoder(np.zeros_like(precoder.w))
    g0, gu = sample_objective_and_constraints(state, zero, channels, theta, beta, qos)
    assert g0 == 0.0
    assert gu == pytest.approx(qos.delta)
    d_alpha_g0, _, _ = sample_gradients(state, zero, channels, theta, beta, qos)
    assert np.array_equal(d_alpha_g0, np.zeros_like(state.alpha))


def test_objective_matches_transmit_power(rng):
    state, precoder, channels, theta, beta, qos = random_point(rng)
    g0, _ = sample_objective_and_constraints(state, precoder, channels, theta, beta, qos)
    assert g0 == pytest.approx(transmit_power(state, precoder, theta), rel=1e-12)


def test_power_gradient_single_unit_feed(rng):
    state, _, channels, theta, beta, qos = random_point(rng, n=6, m=2, k=2, users=1)
    ones = BeampatternState(alpha=np.ones(6), v=state.v)
    w = np.zeros((2, 1), dtype=complex)
    w[0, 0] = 1.0
    d_alpha_g0, _, _ = sample_gradients(ones, Precoder(w), channels, theta, beta, qos)
    assert d_alpha_g0 == pytest.approx(np.full(6, 2.0))


def test_gradients_match_finite_differences(rng):
    for _ in range(5):
        point = random_point(rng)
        analytic = sample_gradients(*point)
        numeric = finite_difference_gradients(*point)
        for a, b in zip(analytic, numeric):
            assert _relative_error(a, b) < 1e-5


# -- recursive estimates ------------------------------------------------------

def _constant_batch(rng, value: float):
    state, precoder, channels, theta, beta, qos = random_point(rng)
    sample = sample_values(state, precoder, channels, theta, beta, qos)
    constant = dataclasses.replace(
        sample,
        g0=value,
        gu=np.full_like(sample.gu, value),
        d_alpha_g0=np.full_like(sample.d_alpha_g0, value),
        d_alpha_gu=np.full_like(sample.d_alpha_gu, value),
        d_v_gu=np.full_like(sample.d_v_gu, value),
    )
    return state, SampleBatch((constant, constant))


def test_update_with_full_weight_takes_batch_mean(rng):
    state, precoder, channels, theta, beta, qos = random_point(rng)
    samples = (
        sample_values(state, precoder, channels, theta, beta, qos),
        sample_values(state, Precoder(2.0 * precoder.w), channels, theta, beta, qos),
    )
    batch = SampleBatch(samples)
    updated = update_estimates(CsscaState.initial(state), batch, 1.0)
    assert updated.t == 1
    assert updated.f0_hat == pytest.approx((samples[0].g0 + samples[1].g0) / 2.0)
    assert np.allclose(updated.grad_v_fu, (samples[0].d_v_gu + samples[1].d_v_gu) / 2.0)


def test_update_with_zero_weight_keeps_estimates(rng):
    state, batch = _constant_batch(rng, 3.0)
    first = update_estimates(CsscaState.initial(state), batch, 1.0)
    _, other = _constant_batch(rng, -8.0)
    second = update_estimates(first, other, 0.0)
    assert second.f0_hat == first.f0_hat
    assert np.array_equal(second.grad_alpha_fu, first.grad_alpha_fu)


def test_update_fixed_point_of_constant_batches(rng):
    state, batch = _constant_batch(rng, 2.5)
    estimates = update_estimates(CsscaState.initial(state), batch, 1.0)
    estimates = update_estimates(estimates, batch, 0.5)
    assert estimates.f0_hat == pytest.approx(2.5)
    assert np.allclose(estimates.fu_hat, 2.5)
    assert np.allclose(estimates.grad_alpha_f0, 2.5)


def test_update_rejects_bad_weight(rng):
    state, batch = _constant_batch(rng, 1.0)
    with pytest.raises(ValueError):
        update_estimates(CsscaState.initial(state), batch, 1.5)


# -- surrogates -----------------------------------------------------------------

def test_surrogates_reproduce_estimates_at_expansion_point(rng):
    n, m, users = 5, 3, 2
    estimates = _estimates(
        rng.uniform(0, 1, n), rng.uniform(0, 1, (m, users)),
        f0=4.0, fu=rng.standard_normal(users),
        g0=rng.standard_normal(n), gau=rng.standard_normal((n, users)), gvu=rng.standard_normal((m, users)),
    )
    surrogates = build_surrogates(estimates, 0.01, 0.02, scale=2.0)
    point = estimates.state
    assert surrogates.objective(point.alpha) == pytest.approx(2.0)
    assert np.allclose(surrogates.constraints(point.alpha, point.v), estimates.fu_hat)

    step = 1e-6
    numeric = np.array([
        (surrogates.objective(point.alpha + step * e) - surrogates.objective(point.alpha - step * e)) / (2 * step)
        for e in np.eye(n)
    ])
    assert numeric == pytest.approx(estimates.grad_alpha_f0 / 2.0, rel=1e-6, abs=1e-8)


def test_constraint_surrogates_are_balls(rng):
    n, m, users = 4, 2, 2
    eps_u = 0.05
    estimates = _estimates(
        rng.uniform(0, 1, n), rng.uniform(0, 1, (m, users)),
        fu=rng.standard_normal(users), gau=rng.standard_normal((n, users)), gvu=rng.standard_normal((m, users)),
    )
    surrogates = build_surrogates(estimates, 0.01, eps_u)
    alpha, v = rng.uniform(0, 1, n), rng.uniform(0, 1, (m, users))
    for u in range(users):
        distance_sq = np.sum((alpha - surrogates.alpha_centers[:, u]) ** 2) + np.sum((v[:, u] - surrogates.v_centers[:, u]) ** 2)
        expected = eps_u * (distance_sq - surrogates.radius_sq[u])
        assert surrogates.constraints(alpha, v)[u] == pytest.approx(expected, rel=1e-9, abs=1e-12)


def test_build_surrogates_rejects_bad_constants():
    estimates = _estimates(np.ones(2), np.ones((1, 1)))
    with pytest.raises(ValueError):
        build_surrogates(estimates, 0.0, 0.01)
    with pytest.raises(ValueError):
        build_surrogates(estimates, 0.01, 0.01, scale=0.0)


# -- surrogate solve ------------------------------------------------------------

def test_slack_constraints_give_clipped_objective_center():
    alpha0 = np.array([0.2, 0.5, 0.9, 0.4])
    g0 = np.array([0.01, -0.004, -0.02, 0.0])
    estimates = _estimates(alpha0, np.full((2, 2), 0.5), fu=[-1.0, -1.0], g0=g0)
    solution = solve_surrogate(build_surrogates(estimates, 0.01, 0.01))
    assert not solution.restored
    assert solution.alpha == pytest.approx(np.clip(alpha0 - g0 / 0.02, 0.0, 1.0), abs=1e-5)


def test_inactive_users_use_closed_form():
    alpha0 = np.array([0.2, 0.5])
    g0 = np.array([0.01, -0.02])
    estimates = _estimates(alpha0, np.full((1, 1), 0.3), g0=g0)
    solution = solve_surrogate(build_surrogates(estimates, 0.01, 0.01, active=[False]))
    assert np.array_equal(solution.alpha, np.clip(alpha0 - g0 / 0.02, 0.0, 1.0))
    assert np.array_equal(solution.v, estimates.state.v)


def test_zero_gradients_keep_expansion_point():
    alpha0 = np.array([0.3, 0.6, 0.1])
    estimates = _estimates(alpha0, np.full((2, 1), 0.4), fu=[-0.5])
    solution = solve_surrogate(build_surrogates(estimates, 0.01, 0.01))
    assert solution.alpha == pytest.approx(alpha0, abs=1e-5)


def test_disjoint_balls_trigger_restoration():
    """Two users whose constraint balls sit at alpha = 0.1 and alpha = 0.9 with radius 0.1."""
    estimates = _estimates(
        [0.5], [[0.5, 0.5]], fu=[0.15, 0.15], gau=[[0.8, -0.8]], gvu=[[0.0, 0.0]]
    )
    surrogates = build_surrogates(estimates, 0.01, 1.0)
    assert surrogates.radius_sq == pytest.approx([0.01, 0.01])
    solution = solve_surrogate(surrogates)
    assert solution.restored
    assert solution.alpha == pytest.approx([0.5], abs=1e-4)
    assert solution.v == pytest.approx(np.full((1, 2), 0.5), abs=1e-4)


def test_empty_ball_goes_straight_to_restoration():
    estimates = _estimates([0.5, 0.5], [[0.5]], fu=[5.0], gau=[[0.1], [0.1]], gvu=[[0.1]])
    solution = solve_surrogate(build_surrogates(estimates, 0.01, 0.01))
    assert solution.restored
    assert np.all((solution.alpha >= 0) & (solution.alpha <= 1))


def test_frozen_alpha_moves_only_v():
    estimates = _estimates([0.2, 0.7], [[0.5, 0.5]], fu=[-0.1, -0.1], gau=[[1.0, 1.0], [1.0, 1.0]], gvu=[[0.004, -0.01]])
    surrogates = build_surrogates(estimates, 0.01, 0.01)
    solution = solve_surrogate(surrogates, freeze_alpha=True)
    assert np.array_equal(solution.alpha, [0.2, 0.7])
    assert solution.v == pytest.approx(np.clip(surrogates.v_centers, 0.0, 1.0))
    assert solution.v == pytest.approx([[0.3, 1.0]])


# -- convergence detection ----------------------------------------------------------

def test_convergence_iteration():
    assert convergence_iteration([5.0] * 4, window=3, threshold=0.01) == 3
    assert convergence_iteration([1.0, 2.0, 4.0, 8.0], window=2, threshold=0.01) is None
    assert convergence_iteration([10.0, 1.0, 1.001, 1.002, 1.001], window=3, threshold=0.01) == 4
    assert convergence_iteration([1.0, 1.0, 1.0, 5.0, 9.0], window=2, threshold=0.01) is None
    assert convergence_iteration([1.0, 1.0, 5.0, 5.0, 5.0], window=2, threshold=0.01) == 4
    assert convergence_iteration([3.0], window=2, threshold=0.01) is None
    with pytest.raises(ValueError):
        convergence_iteration([1.0], window=0, threshold=0.01)


# -- the loop -----------------------------------------------------------------------

def test_long_term_single_iteration(long_term_setup):
    config, stats, tx, rx, coupling = long_term_setup
    result = run_long_term(dataclasses.replace(config, n_iter=1), stats, tx, rx, coupling, seed=1)
    assert len(result.trajectory) == 1
    point = result.trajectory[0]
    assert point.rho == 1.0
    assert point.gamma == pytest.approx(2.0 / 3.0)
    assert point.f0_hat_w > 0
    assert result.state.in_box()


def test_long_term_is_deterministic(long_term_setup):
    config, stats, tx, rx, coupling = long_term_setup
    first = run_long_term(config, stats, tx, rx, coupling, seed=4)
    second = run_long_term(config, stats, tx, rx, coupling, seed=4)
    assert [p.f0_hat_w for p in first.trajectory] == [p.f0_hat_w for p in second.trajectory]
    assert np.array_equal(first.state.alpha, second.state.alpha)
    assert np.array_equal(first.state.v, second.state.v)


def test_long_term_parallel_matches_serial(long_term_setup):
    config, stats, tx, rx, coupling = long_term_setup
    serial = run_long_term(config, stats, tx, rx, coupling, seed=4)
    parallel = run_long_term(dataclasses.replace(config, workers=3), stats, tx, rx, coupling, seed=4)
    assert np.array_equal(serial.state.alpha, parallel.state.alpha)
    assert [p.f0_hat_w for p in serial.trajectory] == [p.f0_hat_w for p in parallel.trajectory]


def test_long_term_iterates_stay_in_box(long_term_setup):
    config, stats, tx, rx, coupling = long_term_setup
    result = run_long_term(config, stats, tx, rx, coupling, seed=2)
    assert len(result.trajectory) == 3
    assert result.state.in_box()
    assert result.estimates.t == 3


def test_frozen_samples_match_first_iteration(long_term_setup):
    config, stats, tx, rx, coupling = long_term_setup
    single = dataclasses.replace(config, n_iter=1)
    fresh = run_long_term(single, stats, tx, rx, coupling, seed=8)
    frozen = run_long_term(
        single, stats, tx, rx, coupling, seed=8, sampler=FrozenSampler(FreshSampler(stats, tx, rx, 8))
    )
    assert np.array_equal(fresh.state.alpha, frozen.state.alpha)
    assert fresh.final_power_w == frozen.final_power_w


def test_hologram_initialization_in_box(long_term_setup):
    config, stats, tx, rx, coupling = long_term_setup
    optimizer = LongTermOptimizer(dataclasses.replace(config, init=InitMode.HOLOGRAM), stats, tx, rx, coupling, seed=0)
    state = optimizer.initial_state()
    assert state.alpha.shape == (tx.num_elements,)
    assert state.v.shape == (rx.num_elements, 2)
    assert state.in_box()


class _RecordingSampler:
    def __init__(self, base):
        self.base = base
        self.calls = []

    def draw(self, iteration, sample, attempt=0):
        self.calls.append((iteration, sample, attempt))
        return self.base.draw(iteration, sample, attempt)


def _dark_state(tx, rx, users=2):
    return BeampatternState(alpha=np.zeros(tx.num_elements), v=np.full((rx.num_elements, users), 0.5))


def test_dark_beampattern_redraws_then_falls_back(long_term_setup):
    config, stats, tx, rx, coupling = long_term_setup
    sampler = _RecordingSampler(FreshSampler(stats, tx, rx, 5))
    optimizer = LongTermOptimizer(config, stats, tx, rx, coupling, seed=5, sampler=sampler)
    batch = optimizer.sample_batch(_dark_state(tx, rx), 1)
    assert batch.fallback_count == config.t_h
    assert sorted(sampler.calls) == [(1, l, a) for l in range(config.t_h) for a in (0, 1)]
    assert batch.g0 == 0.0
    assert batch.gu == pytest.approx(np.full(2, 1.0))


def test_fallback_failure_names_iteration_and_sample(long_term_setup, monkeypatch):
    config, stats, tx, rx, coupling = long_term_setup

    def singular(instance, regularization=1e-3):
        raise np.linalg.LinAlgError("Singular matrix")

    monkeypatch.setattr(cssca, "regularized_zf_precoder", singular)
    optimizer = LongTermOptimizer(config, stats, tx, rx, coupling, seed=5)
    with pytest.raises(SolverError) as info:
        optimizer.sample_batch(_dark_state(tx, rx), 3)
    assert info.value.iteration == 3
    assert info.value.sample == 0
    assert "t=3, l=0" in str(info.value)


def test_recursive_objective_estimate_within_three_standard_errors(long_term_setup):
    """At a fixed iterate f0_hat averages the sampled powers with weights set by rho^t."""
    config, stats, tx, rx, coupling = long_term_setup
    optimizer = LongTermOptimizer(config, stats, tx, rx, coupling, seed=11)
    state = optimizer.initial_state()

    estimates = CsscaState.initial(state)
    weights = []
    for t in range(1, 16):
        rho = 1.0 if t == 1 else step_sizes(t)[0]
        estimates = update_estimates(estimates, optimizer.sample_batch(state, t), rho)
        weights = [w * (1.0 - rho) for w in weights] + [rho]

    reference = LongTermOptimizer(config, stats, tx, rx, coupling, seed=12)
    powers = np.array([
        s.g0 for t in range(1, 61) for s in reference.sample_batch(state, t).samples
    ])
    variance = powers.var(ddof=1)
    standard_error = np.sqrt(variance * np.sum(np.square(weights)) / config.t_h + variance / powers.shape[0])
    assert np.sum(weights) == pytest.approx(1.0)
    assert abs(estimates.f0_hat - powers.mean()) <= 3.0 * standard_error


def test_config_validation():
    qos = QosSpec(delta=np.ones(1), sigma2=1.0)
    with pytest.raises(ValueError):
        CsscaConfig(t_h=0, eps0=0.01, eps_u=0.01, n_iter=1, qos=qos)
    with pytest.raises(ValueError):
        CsscaConfig(t_h=1, eps0=0.0, eps_u=0.01, n_iter=1, qos=qos)


def test_solver_error_carries_context():
    error = SolverError("surrogate failed", iteration=3, sample=1)
    assert error.iteration == 3
    assert "t=3, l=1" in str(error)
