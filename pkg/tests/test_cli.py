"""
Tests for the command-line entry point.
"""

import pytest

from app.cli import build_parser, main, resolve_config
from app.schemas.experiment import BaselineName, load_profile, with_overrides


def test_flags_override_profile():
    args = build_parser().parse_args(
        ["compare", "--profile", "ci", "--delta", "2", "3", "--seed", "7", "--replications", "4", "--out", "x"]
    )
    config = resolve_config(args)
    assert config.delta == 2.0
    assert config.delta_grid == [2.0, 3.0]
    assert config.seed == 7
    assert config.replications == 4
    assert config.output_dir == "x"


def test_acceptance_flag_is_off_by_default():
    assert build_parser().parse_args(["validate"]).acceptance is False
    assert build_parser().parse_args(["validate", "--acceptance"]).acceptance is True


def test_unknown_command_exits():
    with pytest.raises(SystemExit):
        build_parser().parse_args(["train"])


def test_bad_config_file_returns_two(tmp_path):
    path = tmp_path / "broken.json"
    path.write_text("{not json", encoding="utf-8")
    assert main(["convergence", "--config", str(path)]) == 2
    assert main(["convergence", "--config", str(tmp_path / "missing.json")]) == 2


def test_convergence_from_config_file(tmp_path):
    config = with_overrides(
        load_profile("ci"),
        tx_panel={"rows": 4, "spacing_m": 2.5e-3, "feed_layout": "grid", "feed_grid_side": 2},
        rx_panel={"rows": 2, "spacing_m": 2.5e-3},
        cssca={"t_h": 1, "n_iter": 2, "window": 2},
        delta_grid=[1.0],
        replications=1,
        baselines=[BaselineName.AO],
    )
    path = tmp_path / "tiny.json"
    path.write_text(config.model_dump_json(), encoding="utf-8")
    out = tmp_path / "out"
    assert main(["convergence", "--config", str(path), "--out", str(out), "--log-level", "warning"]) == 0
    assert (out / "convergence.csv").exists()
    assert (out / "convergence_summary.json").exists()
