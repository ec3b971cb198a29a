"""
Unit tests for steering vectors, path loss, noise power and channel draws.
"""

import numpy as np
import pytest

from app.models.channel import PathAngles, StatisticalCsi
from app.schemas.channel import ScenarioConfig
from app.services.channel import (
    FreshSampler,
    FrozenSampler,
    draw_slots,
    draw_statistical_csi,
    los_path_loss_db,
    noise_power,
    sample_channel,
    sample_user_channel,
    steering_vector_rx,
    steering_vector_tx,
    watts_to_dbm,
)
from app.services.geometry import build_panel

WAVELENGTH = 0.01


def test_steering_vector_first_entry_is_one(rng):
    panel = build_panel(4, 2.5e-3, WAVELENGTH)
    for _ in range(5):
        a = steering_vector_tx(panel, *rng.uniform(-np.pi, np.pi, 2))
        assert a[0] == pytest.approx(1.0 + 0.0j)
        assert np.allclose(np.abs(a), 1.0)


def test_steering_vector_vertical_is_all_ones():
    panel = build_panel(3, 2.5e-3, WAVELENGTH)
    assert np.allclose(steering_vector_tx(panel, 0.4, np.pi / 2), 1.0)
    assert np.allclose(steering_vector_rx(panel, -1.1, np.pi / 2), 1.0)


def test_steering_vector_quarter_wavelength_pattern():
    """theta = psi = 0 with quarter-wavelength spacing: phase pi/2 per column step."""
    panel = build_panel(2, 2.5e-3, WAVELENGTH)
    assert np.allclose(steering_vector_tx(panel, 0.0, 0.0), [1.0, 1j, 1.0, 1j])


def test_steering_vector_conjugate_is_negated_phase():
    panel = build_panel(3, 2.5e-3, WAVELENGTH)
    a = steering_vector_rx(panel, 0.7, 0.2)
    b = steering_vector_rx(panel, 0.7, np.pi - 0.2)
    assert np.allclose(a.conj(), b)


@pytest.mark.parametrize("d3d, expected", [(1.0, 61.4), (10.0, 81.4), (100.0, 101.4)])
def test_los_path_loss(d3d, expected):
    assert los_path_loss_db(d3d) == pytest.approx(expected)


def test_los_path_loss_rejects_non_positive_distance():
    with pytest.raises(ValueError):
        los_path_loss_db(0.0)


@pytest.mark.parametrize(
    "psd, bandwidth, expected",
    [(-169.0, 100e6, 10 ** -11.9), (0.0, 1.0, 1e-3), (-169.0, 1.0, 10 ** -19.9)],
)
def test_noise_power(psd, bandwidth, expected):
    assert noise_power(psd, bandwidth) == pytest.approx(expected, rel=1e-12)


def test_watts_to_dbm():
    assert watts_to_dbm(1e-3) == pytest.approx(0.0)
    assert watts_to_dbm(1.0) == pytest.approx(30.0)
    assert watts_to_dbm(0.0) == float("-inf")


def test_draw_statistical_csi_table_one_layout(rng):
    stats = draw_statistical_csi(ScenarioConfig(num_users=4, num_nlos_paths=2), rng)
    assert len(stats) == 4
    farthest = np.hypot(10.0, 23.5)
    for stat in stats:
        assert stat.num_nlos_paths == 2
        assert 23.5 - 1e-9 <= stat.distance_3d <= farthest + 1e-9
        assert np.hypot(*stat.position[:2]) <= 10.0 + 1e-9
        assert abs(stat.los_gain) == pytest.approx(10 ** (-los_path_loss_db(stat.distance_3d) / 20.0))


def test_draw_statistical_csi_without_nlos_keeps_std(rng):
    stats = draw_statistical_csi(ScenarioConfig(num_users=2, num_nlos_paths=0), rng)
    for stat in stats:
        assert stat.nlos == ()
        assert stat.nlos_std == pytest.approx(np.sqrt(0.1) * abs(stat.los_gain))


def test_sample_channel_los_only_is_rank_one(small_panels, rng):
    tx, rx, _ = small_panels
    stats = draw_statistical_csi(ScenarioConfig(num_users=2, num_nlos_paths=0), rng)
    channels = sample_channel(stats, tx, rx, rng)
    for u, stat in enumerate(stats):
        expected = stat.los_gain * np.outer(
            steering_vector_rx(rx, stat.los.omega, stat.los.phi),
            steering_vector_tx(tx, stat.los.theta, stat.los.psi).conj(),
        )
        assert np.allclose(channels.h[u], expected)
        assert np.linalg.matrix_rank(channels.h[u]) == 1


def test_sample_channel_rank_bound(small_panels, scenario, rng):
    tx, rx, _ = small_panels
    stats = draw_statistical_csi(scenario, rng)
    channels = sample_channel(stats, tx, rx, rng)
    assert channels.h.shape == (2, rx.num_elements, tx.num_elements)
    for u in range(channels.num_users):
        assert np.linalg.matrix_rank(channels.h[u]) <= scenario.num_nlos_paths + 1


def test_sample_mean_converges_to_los_term(small_panels):
    tx, rx, _ = small_panels
    stat = StatisticalCsi(
        los_gain=1.0 + 0.5j,
        los=PathAngles(0.2, 0.3, -0.4, 0.5),
        nlos=(PathAngles(1.0, 0.1, 0.7, 1.2), PathAngles(-0.6, 2.0, 0.3, 0.4)),
        nlos_std=0.3,
    )
    draws = 4000
    sampler_rng = np.random.default_rng(7)
    mean = sum(sample_user_channel(stat, tx, rx, sampler_rng) for _ in range(draws)) / draws
    los = sample_user_channel(
        StatisticalCsi(los_gain=stat.los_gain, los=stat.los, nlos=(), nlos_std=0.0), tx, rx, sampler_rng
    )
    standard_error = np.sqrt(mean.size * len(stat.nlos)) * stat.nlos_std / np.sqrt(draws)
    assert np.linalg.norm(mean - los) <= 5.0 * standard_error


def test_fresh_sampler_is_deterministic(small_panels, scenario, rng):
    tx, rx, _ = small_panels
    stats = draw_statistical_csi(scenario, rng)
    first = FreshSampler(stats, tx, rx, seed=11).draw(3, 1)
    second = FreshSampler(stats, tx, rx, seed=11).draw(3, 1)
    other = FreshSampler(stats, tx, rx, seed=11).draw(4, 1)
    assert np.array_equal(first.h, second.h)
    assert not np.array_equal(first.h, other.h)


def test_frozen_sampler_reuses_first_iteration(small_panels, scenario, rng):
    tx, rx, _ = small_panels
    stats = draw_statistical_csi(scenario, rng)
    base = FreshSampler(stats, tx, rx, seed=5)
    frozen = FrozenSampler(base)
    assert np.array_equal(frozen.draw(1, 0).h, base.draw(1, 0).h)
    assert np.array_equal(frozen.draw(9, 0).h, base.draw(1, 0).h)
    assert not np.array_equal(frozen.draw(9, 1).h, frozen.draw(9, 0).h)


def test_draw_slots_deterministic(small_panels, scenario, rng):
    tx, rx, _ = small_panels
    stats = draw_statistical_csi(scenario, rng)
    a = draw_slots(stats, tx, rx, seed=3, num_slots=3)
    b = draw_slots(stats, tx, rx, seed=3, num_slots=3)
    assert len(a) == 3
    assert all(np.array_equal(x.h, y.h) for x, y in zip(a, b))
