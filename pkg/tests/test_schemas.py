"""
Unit tests for Pydantic schemas to ensure validation works.
"""

import json

import pytest
from pydantic import ValidationError

from app.schemas.channel import ScenarioConfig
from app.schemas.experiment import (
    PROFILES,
    BaselineName,
    ExperimentConfig,
    load_config,
    load_profile,
    with_overrides,
)
from app.schemas.geometry import FeedLayout, PanelSpec
from app.schemas.results import BaselineResult, CheckResult, ValidationReport
from app.services.experiments import build_environment


def test_table_one_profile_dimensions():
    """Full-size profile: 256 BS elements, 9 feeds, 36 UE elements, 4 users."""
    config = load_profile("table1")
    env = build_environment(config)
    assert env.tx.num_elements == 256
    assert env.tx.num_feeds == 9
    assert env.rx.num_elements == 36
    assert config.scenario.num_users == 4
    assert config.cssca.t_h == 10
    assert config.cssca.n_iter == 300
    assert config.cssca.eps0 == config.cssca.eps_u == 0.01
    assert env.sigma2 == pytest.approx(10 ** -11.9)


def test_ci_profile_is_smaller():
    ci, full = load_profile("ci"), load_profile("table1")
    assert ci.tx_panel.rows < full.tx_panel.rows
    assert ci.cssca.n_iter < full.cssca.n_iter
    assert set(ci.baselines) == set(BaselineName)


def test_unknown_profile():
    with pytest.raises(KeyError):
        load_profile("nope")


def test_scenario_wavelength():
    assert ScenarioConfig().wavelength_m == pytest.approx(0.01, rel=1e-3)


def test_scenario_rejects_reversed_range():
    with pytest.raises(ValidationError):
        ScenarioConfig(nlos_azimuth_range_rad=(1.0, -1.0))


def test_config_hash_is_stable_and_ignores_output_dir():
    config = load_profile("ci")
    assert config.config_hash() == load_profile("ci").config_hash()
    assert len(config.config_hash()) == 16
    assert with_overrides(config, output_dir="elsewhere").config_hash() == config.config_hash()
    assert with_overrides(config, seed=5).config_hash() != config.config_hash()


def test_overrides_are_revalidated():
    config = load_profile("ci")
    updated = with_overrides(config, seed=9, delta_grid=[2.0], delta=2.0, replications=None)
    assert updated.seed == 9
    assert updated.delta_grid == [2.0]
    assert updated.replications == config.replications
    assert with_overrides(config) is config
    with pytest.raises(ValidationError):
        with_overrides(config, delta=[1.0, 2.0, 3.0])


def test_empty_delta_grid_rejected():
    with pytest.raises(ValidationError):
        with_overrides(load_profile("ci"), delta_grid=[])


def test_receive_panel_needs_centre_feed():
    data = PROFILES["ci"].model_dump()
    data["rx_panel"] = PanelSpec(rows=4, spacing_m=2.5e-3, feed_layout=FeedLayout.GRID, feed_grid_side=2).model_dump()
    with pytest.raises(ValidationError):
        ExperimentConfig.model_validate(data)


def test_negative_threshold_rejected():
    with pytest.raises(ValidationError):
        with_overrides(load_profile("ci"), delta=-1.0)


def test_load_config_from_json(tmp_path):
    path = tmp_path / "config.json"
    path.write_text(load_profile("ci").model_dump_json(), encoding="utf-8")
    assert load_config(path) == load_profile("ci")


def test_load_config_rejects_unknown_baseline(tmp_path):
    data = json.loads(load_profile("ci").model_dump_json())
    data["baselines"] = ["ao", "magic"]
    path = tmp_path / "config.json"
    path.write_text(json.dumps(data), encoding="utf-8")
    with pytest.raises(ValidationError):
        load_config(path)


def test_baseline_result_bounds():
    with pytest.raises(ValidationError):
        BaselineResult(
            name="x", avg_power_watts=1.0, avg_power_dbm=30.0, avg_se_per_user=[1.0], qos_violation_rate=1.5, num_slots=1
        )


def test_validation_report_failures():
    report = ValidationReport(
        passed=False,
        checks=[CheckResult(name="a", passed=True), CheckResult(name="b", passed=False, detail="boom")],
    )
    assert [c.name for c in report.failures] == ["b"]
