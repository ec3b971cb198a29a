"""
Tests for the invariant checks behind ``validate``.
"""

from app.core.errors import OracleError
from app.services import validation
from app.services.cssca import sample_gradients
from app.services.validation import (
    check_colinear_infeasible,
    check_gradients,
    check_quantizer,
    check_socp_oracle,
    run_validation,
)


def test_validation_passes_at_reduced_counts():
    report = run_validation(seed=0, points=5, instances=5)
    assert report.passed, [f"{c.name}: {c.detail}" for c in report.failures]
    names = {c.name for c in report.checks}
    assert {"gradients", "power_identity", "sinr_forms", "socp_oracle", "sinr_activeness"} <= names
    assert {"colinear_infeasible", "quantizer", "surrogate_consistency", "long_term_box"} <= names


def test_perturbed_gradient_fails():
    def perturbed(*point):
        d_alpha_g0, d_alpha_gu, d_v_gu = sample_gradients(*point)
        return 1.01 * d_alpha_g0, d_alpha_gu, d_v_gu

    assert not check_gradients(seed=0, points=3, gradient_fn=perturbed).passed
    report = run_validation(seed=0, points=3, instances=2, gradient_fn=perturbed)
    assert not report.passed
    assert [c.name for c in report.failures] == ["gradients"]


def test_crashing_suite_is_reported():
    def broken(*point):
        raise RuntimeError("no gradients today")

    report = run_validation(seed=1, points=2, instances=2, gradient_fn=broken)
    assert not report.passed
    assert any(c.name == "crashed" and "RuntimeError" in c.detail for c in report.failures)


def test_standalone_checks():
    assert check_colinear_infeasible().passed
    assert check_quantizer().passed


def test_oracle_breakdown_fails_the_check_without_crashing(monkeypatch):
    def singular(instance):
        raise OracleError("downlink power system is singular")

    monkeypatch.setattr(validation, "duality_precoder", singular)
    oracle, activeness = check_socp_oracle(seed=0, instances=2)
    assert oracle.name == "socp_oracle"
    assert not oracle.passed
    assert "2 oracle failures" in oracle.detail
    assert activeness.passed
