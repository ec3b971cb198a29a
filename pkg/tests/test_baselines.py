"""
Unit tests for the comparison schemes on a small two-user surface.
"""

import dataclasses

import numpy as np
import pytest

from app.models.cssca import CsscaConfig
from app.models.system import QosSpec
from app.services import baselines
from app.services.channel import draw_slots, draw_statistical_csi, noise_power
from app.services.cssca import LongTermOptimizer


@pytest.fixture
def interval(small_panels, scenario):
    tx, rx, coupling = small_panels
    stats = draw_statistical_csi(scenario, np.random.default_rng(3))
    slots = draw_slots(stats, tx, rx, seed=3, num_slots=3)
    return stats, slots, tx, rx, coupling


def _context(interval, scenario, delta: float, max_rounds: int = 5) -> baselines.BaselineContext:
    stats, _, tx, rx, coupling = interval
    qos = QosSpec(delta=np.full(2, delta), sigma2=noise_power(scenario.noise_psd_dbm_hz, scenario.bandwidth_hz))
    config = CsscaConfig(t_h=2, eps0=0.01, eps_u=0.01, n_iter=2, qos=qos, window=2)
    initial = LongTermOptimizer(config, stats, tx, rx, coupling, seed=3).initial_state()
    return baselines.BaselineContext(
        theta=coupling.theta,
        beta=coupling.beta,
        qos=qos,
        eps0=0.01,
        eps_u=0.01,
        initial=initial,
        max_rounds=max_rounds,
    )


def test_zero_threshold_needs_no_power(interval, scenario):
    _, slots, *_ = interval
    ctx = _context(interval, scenario, delta=0.0)
    for result in (baselines.run_ao(slots, ctx), baselines.run_ots(slots, ctx), baselines.run_sdma(slots, ctx)):
        assert result.avg_power_watts == 0.0
        assert result.qos_violation_rate == 0.0
        assert result.num_slots == 3


def test_ao_meets_thresholds(interval, scenario):
    _, slots, *_ = interval
    result = baselines.run_ao(slots, _context(interval, scenario, delta=1.0))
    assert result.name == "ao"
    assert result.avg_power_watts > 0
    assert result.qos_violation_rate == 0.0
    assert result.avg_se_per_user == pytest.approx([1.0, 1.0], abs=1e-3)


def test_ots_on_one_slot_equals_ao(interval, scenario):
    _, slots, *_ = interval
    ctx = _context(interval, scenario, delta=1.0)
    assert baselines.run_ots(slots[:1], ctx).avg_power_watts == baselines.run_ao(slots[:1], ctx).avg_power_watts


def test_ots_repeated_channel_never_violates(interval, scenario):
    _, slots, *_ = interval
    result = baselines.run_ots([slots[0]] * 3, _context(interval, scenario, delta=1.0))
    assert result.qos_violation_rate == 0.0


def test_alternation_never_increases_power(interval, scenario):
    _, slots, *_ = interval
    ctx = _context(interval, scenario, delta=1.0)
    step = baselines.socp_step(ctx)
    start_precoder, _ = step(ctx.initial, slots[0])
    start_power = baselines.transmit_power(ctx.initial, start_precoder, ctx.theta)
    state, precoder, feasible = baselines.SlotAlternation(ctx, step).run(ctx.initial, slots[0])
    assert feasible
    assert baselines.transmit_power(state, precoder, ctx.theta) <= start_power
    assert state.in_box()


def test_random_amplitude_is_deterministic(interval, scenario):
    _, slots, *_ = interval
    ctx = _context(interval, scenario, delta=1.0)
    first = baselines.run_random_amplitude(slots, ctx, np.random.default_rng(17))
    second = baselines.run_random_amplitude(slots, ctx, np.random.default_rng(17))
    assert first == second
    assert first.name == "random_amplitude"


def test_sdma_uses_zero_forcing(interval, scenario):
    _, slots, *_ = interval
    result = baselines.run_sdma(slots, _context(interval, scenario, delta=1.0))
    assert result.name == "sdma"
    assert result.avg_power_watts > 0
    assert result.avg_se_per_user == pytest.approx([1.0, 1.0], abs=1e-6)


def test_tts_fixed_samples(interval, scenario):
    stats, slots, tx, rx, coupling = interval
    ctx = _context(interval, scenario, delta=1.0)
    config = CsscaConfig(t_h=2, eps0=0.01, eps_u=0.01, n_iter=2, qos=ctx.qos, window=2)
    first = baselines.run_tts_fixed_samples(stats, tx, rx, coupling, config, 3, slots, ctx.initial)
    second = baselines.run_tts_fixed_samples(stats, tx, rx, coupling, dataclasses.replace(config), 3, slots, ctx.initial)
    assert first.name == "tts_fixed"
    assert first == second


def test_ots_requires_slots(interval, scenario):
    with pytest.raises(ValueError):
        baselines.run_ots([], _context(interval, scenario, delta=1.0))
