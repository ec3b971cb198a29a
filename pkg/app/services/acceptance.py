"""
Profile-level acceptance checks over experiment outputs.

Unlike ``validation``, these judge Monte-Carlo results of whole runs:
convergence of the long-term loop, power growth with the QoS threshold,
the ordering of the schemes and the quantization trend. Each check works on
the summaries ``ExperimentService`` already produces.
"""

from typing import Sequence

import numpy as np

from app.core.logger import get_logger
from app.schemas.results import CheckResult, ComparisonSummary, ConvergenceSummary, QuantRow, ValidationReport
from app.services.channel import watts_to_dbm
from app.services.experiments import ExperimentService

logger = get_logger(__name__)

# (scheme, required margin in dB by which "proposed" must undercut it)
ORDERING_MARGINS_DB = (("ots", 0.0), ("random_amplitude", 3.0), ("sdma", 0.0), ("tts_fixed", 0.0))
AO_BAND_DB = 1.5
QUANT_RESOLUTION_DB = 0.1


def check_convergence(summary: ConvergenceSummary, min_fraction: float = 0.8) -> CheckResult:
    """Enough runs satisfy the trailing-window criterion within their iteration budget."""
    converged = sum(1 for run in summary.runs if run.converged_at is not None)
    fraction = converged / len(summary.runs) if summary.runs else 0.0
    return CheckResult(
        name="convergence",
        passed=bool(summary.runs) and fraction >= min_fraction,
        detail=f"{converged}/{len(summary.runs)} runs flat over the final {summary.window} iterations",
    )


def _mean_power_by_delta(summary: ConvergenceSummary) -> dict[float, float]:
    deltas = sorted({run.delta for run in summary.runs})
    return {d: float(np.mean([r.converged_power_w for r in summary.runs if r.delta == d])) for d in deltas}


def check_threshold_monotonicity(summary: ConvergenceSummary, rel_tol: float = 1e-9) -> CheckResult:
    means = _mean_power_by_delta(summary)
    drops = [
        (a, b) for (a, pa), (b, pb) in zip(means.items(), list(means.items())[1:])
        if pb < pa * (1.0 - rel_tol)
    ]
    return CheckResult(
        name="threshold_monotonicity",
        passed=len(means) > 1 and not drops,
        detail="; ".join(f"delta={d}: {watts_to_dbm(p):.2f} dBm" for d, p in means.items()),
    )


def check_scheme_ordering(summary: ComparisonSummary) -> CheckResult:
    """Proposed undercuts each baseline by its margin and stays close to AO."""
    power = summary.mean_power_dbm
    if "proposed" not in power:
        return CheckResult(name="scheme_ordering", passed=False, detail="no proposed row")
    problems = []
    for scheme, margin in ORDERING_MARGINS_DB:
        if scheme in power and power["proposed"] > power[scheme] - margin:
            problems.append(f"proposed {power['proposed']:.2f} dBm vs {scheme} {power[scheme]:.2f} dBm (margin {margin} dB)")
    if "ao" in power and abs(power["proposed"] - power["ao"]) > AO_BAND_DB:
        problems.append(f"proposed {power['proposed']:.2f} dBm vs ao {power['ao']:.2f} dBm")
    return CheckResult(name="scheme_ordering", passed=not problems, detail="; ".join(problems) or "ok")


def check_quantization_trend(rows: Sequence[QuantRow]) -> CheckResult:
    """Replication-averaged power gap shrinks with more bits, allowing one inversion."""
    bits = sorted({r.bits for r in rows if r.bits is not None})
    gaps = {b: float(np.mean([abs(r.power_gap_db) for r in rows if r.bits == b])) for b in bits}
    problems = []
    inversions = sum(1 for a, b in zip(bits, bits[1:]) if gaps[b] > gaps[a])
    if inversions > 1:
        problems.append(f"{inversions} inversions")
    if 2 in gaps and 6 in gaps and not gaps[2] > gaps[6]:
        problems.append(f"Q=2 gap {gaps[2]:.3f} dB does not exceed Q=6 gap {gaps[6]:.3f} dB")
    if 16 in gaps and gaps[16] > QUANT_RESOLUTION_DB:
        problems.append(f"Q=16 gap {gaps[16]:.3f} dB")
    return CheckResult(
        name="quantization_trend",
        passed=bool(bits) and not problems,
        detail="; ".join(problems) or ", ".join(f"Q={b}: {g:.3f} dB" for b, g in gaps.items()),
    )


def run_acceptance(service: ExperimentService, write: bool = False) -> ValidationReport:
    """Run convergence, comparison and quantization on the service's config and judge them."""
    checks: list[CheckResult] = []
    try:
        convergence = service.run_convergence(write=write)
        checks.append(check_convergence(convergence))
        checks.append(check_threshold_monotonicity(convergence))
        checks.append(check_scheme_ordering(service.run_compare(write=write)))
        checks.append(check_quantization_trend(service.run_sweep_quant(write=write)))
    except Exception as exc:  # noqa: BLE001
        logger.exception("acceptance run crashed")
        checks.append(CheckResult(name="crashed", passed=False, detail=f"{type(exc).__name__}: {exc}"))
    for check in checks:
        log = logger.info if check.passed else logger.error
        log("acceptance %-22s %s  %s", check.name, "PASS" if check.passed else "FAIL", check.detail)
    return ValidationReport(passed=all(c.passed for c in checks), checks=checks)
