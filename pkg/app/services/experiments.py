"""Experiment driver behind the CLI and the HTTP router."""

from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Sequence, Union

import numpy as np

from app.core.logger import get_logger
from app.core.seeding import Stream, derive_seed, substream
from app.models.channel import ChannelRealization, StatisticalCsi
from app.models.cssca import CsscaConfig, LongTermResult
from app.models.geometry import PhaseCoupling, SurfacePanel
from app.models.quantization import QuantSpec
from app.models.system import QosSpec
from app.schemas.experiment import BaselineName, ExperimentConfig
from app.schemas.results import (
    BaselineResult,
    ComparisonRow,
    ComparisonSummary,
    ConvergenceRun,
    ConvergenceSummary,
    QuantRow,
    TrajectoryRow,
)
from app.services import baselines
from app.services.channel import draw_slots, draw_statistical_csi, noise_power, watts_to_dbm
from app.services.cssca import LongTermOptimizer
from app.services.evaluation import evaluate_slot, short_term_or_fallback, summarize
from app.services.geometry import build_panel_from_spec, phase_coupling
from app.services.persistence import write_csv, write_json
from app.services.quantization import quantize_state

logger = get_logger(__name__)


@dataclass(frozen=True)
class Environment:
    tx: SurfacePanel
    rx: SurfacePanel
    coupling: PhaseCoupling
    sigma2: float


@dataclass(frozen=True)
class Interval:
    """One long interval: statistical CSI and the evaluation slots drawn from it."""
    replication: int
    seed: int
    stats: list[StatisticalCsi]
    slots: list[ChannelRealization]


def build_environment(config: ExperimentConfig) -> Environment:
    wavelength = config.scenario.wavelength_m
    tx = build_panel_from_spec(config.tx_panel, wavelength)
    rx = build_panel_from_spec(config.rx_panel, wavelength)
    sigma2 = noise_power(config.scenario.noise_psd_dbm_hz, config.scenario.bandwidth_hz)
    return Environment(tx=tx, rx=rx, coupling=phase_coupling(tx, rx), sigma2=sigma2)


class ExperimentService:
    def __init__(self, config: ExperimentConfig, output_dir: Optional[Union[str, Path]] = None) -> None:
        self.config = config
        self.output_dir = Path(output_dir or config.output_dir)
        self.env = build_environment(config)
        self.config_hash = config.config_hash()
        logger.info(
            "Experiment profile=%s hash=%s N=%s M=%s K=%s U=%s",
            config.profile, self.config_hash, self.env.tx.num_elements, self.env.rx.num_elements,
            self.env.tx.num_feeds, config.scenario.num_users,
        )

    # -- building blocks -------------------------------------------------------

    def qos(self, delta: Union[float, Sequence[float]]) -> QosSpec:
        users = self.config.scenario.num_users
        return QosSpec(delta=np.broadcast_to(np.asarray(delta, dtype=float), (users,)).copy(), sigma2=self.env.sigma2)

    def cssca_config(self, delta: Union[float, Sequence[float]]) -> CsscaConfig:
        c = self.config.cssca
        return CsscaConfig(
            t_h=c.t_h,
            eps0=c.eps0,
            eps_u=c.eps_u,
            n_iter=c.n_iter,
            qos=self.qos(delta),
            window=min(c.window, c.n_iter),
            threshold=c.threshold,
            init=c.init,
            workers=self.config.workers,
            solver_tol=self.config.solver.tol,
            solver_max_iters=self.config.solver.max_iters,
        )

    def interval(self, replication: int) -> Interval:
        seed = derive_seed(self.config.seed, replication)
        stats = draw_statistical_csi(self.config.scenario, substream(seed, Stream.CSI))
        slots = draw_slots(stats, self.env.tx, self.env.rx, seed, self.config.slots_per_interval)
        return Interval(replication=replication, seed=seed, stats=stats, slots=slots)

    def optimizer(self, interval: Interval, delta) -> LongTermOptimizer:
        return LongTermOptimizer(
            self.cssca_config(delta), interval.stats, self.env.tx, self.env.rx, self.env.coupling, interval.seed
        )

    def baseline_context(self, optimizer: LongTermOptimizer) -> baselines.BaselineContext:
        cfg = optimizer.config
        return baselines.BaselineContext(
            theta=self.env.coupling.theta,
            beta=self.env.coupling.beta,
            qos=cfg.qos,
            eps0=cfg.eps0,
            eps_u=cfg.eps_u,
            initial=optimizer.initial_state(),
            max_rounds=self.config.alternation.max_rounds,
            rel_tol=self.config.alternation.rel_tol,
            solver_tol=cfg.solver_tol,
            solver_max_iters=cfg.solver_max_iters,
        )

    def _path(self, name: str) -> Path:
        return self.output_dir / name

    # -- convergence -----------------------------------------------------------

    def run_convergence(self, write: bool = True) -> ConvergenceSummary:
        """Long-term trajectories for every threshold on the grid and every replication."""
        rows: list[TrajectoryRow] = []
        runs: list[ConvergenceRun] = []
        for delta in self.config.delta_grid:
            for replication in range(self.config.replications):
                interval = self.interval(replication)
                result = self.optimizer(interval, delta).run()
                rows.extend(self._trajectory_rows(delta, result))
                runs.append(
                    ConvergenceRun(
                        delta=delta,
                        replication=replication,
                        converged_power_w=result.final_power_w,
                        converged_power_dbm=watts_to_dbm(result.final_power_w),
                        converged_at=result.converged_at,
                        infeasible_samples=result.infeasible_samples,
                        restorations=result.restorations,
                    )
                )
                logger.info(
                    "delta=%s replication=%s converged_at=%s power=%.3f dBm",
                    delta, replication, result.converged_at, watts_to_dbm(result.final_power_w),
                )
        summary = ConvergenceSummary(
            config_hash=self.config_hash,
            seed=self.config.seed,
            profile=self.config.profile,
            window=min(self.config.cssca.window, self.config.cssca.n_iter),
            threshold=self.config.cssca.threshold,
            runs=runs,
        )
        if write:
            write_csv(self._path("convergence.csv"), rows)
            write_json(self._path("convergence_summary.json"), summary)
        return summary

    def _trajectory_rows(self, delta: float, result: LongTermResult) -> list[TrajectoryRow]:
        return [
            TrajectoryRow(
                config_hash=self.config_hash,
                seed=self.config.seed,
                delta=delta,
                t=p.t,
                rho=p.rho,
                gamma=p.gamma,
                f0_hat_w=p.f0_hat_w,
                f0_hat_dbm=p.f0_hat_dbm,
                max_fu_hat=p.max_fu_hat,
                restored_flag=p.restored,
                infeasible_count=p.infeasible_count,
            )
            for p in result.trajectory
        ]

    # -- scheme comparison --------------------------------------------------

    def compare_interval(self, interval: Interval, delta) -> list[BaselineResult]:
        """Proposed method plus every enabled baseline on the same slots."""
        optimizer = self.optimizer(interval, delta)
        ctx = self.baseline_context(optimizer)
        proposed = optimizer.run(ctx.initial)
        results = [optimizer.evaluate(proposed.state, interval.slots, name="proposed")]

        enabled = self.config.baselines
        if BaselineName.AO in enabled:
            results.append(baselines.run_ao(interval.slots, ctx))
        if BaselineName.OTS in enabled:
            results.append(baselines.run_ots(interval.slots, ctx))
        if BaselineName.TTS_FIXED in enabled:
            results.append(
                baselines.run_tts_fixed_samples(
                    interval.stats, self.env.tx, self.env.rx, self.env.coupling,
                    optimizer.config, interval.seed, interval.slots, ctx.initial,
                )
            )
        if BaselineName.RANDOM_AMPLITUDE in enabled:
            rng = substream(interval.seed, Stream.RANDOM_ALPHA)
            results.append(baselines.run_random_amplitude(interval.slots, ctx, rng))
        if BaselineName.SDMA in enabled:
            results.append(baselines.run_sdma(interval.slots, ctx))
        return results

    def _comparison_rows(self, delta: float, replication: int, results: list[BaselineResult]) -> list[ComparisonRow]:
        return [
            ComparisonRow(
                config_hash=self.config_hash,
                seed=self.config.seed,
                delta=delta,
                replication=replication,
                scheme=r.name,
                avg_power_watts=r.avg_power_watts,
                avg_power_dbm=r.avg_power_dbm,
                mean_se=float(np.mean(r.avg_se_per_user)),
                qos_violation_rate=r.qos_violation_rate,
                infeasible_slots=r.infeasible_slots,
            )
            for r in results
        ]

    def _scalar_delta(self) -> float:
        delta = self.config.delta
        return float(np.mean(delta)) if isinstance(delta, list) else float(delta)

    def run_compare(self, write: bool = True) -> ComparisonSummary:
        rows: list[ComparisonRow] = []
        for replication in range(self.config.replications):
            interval = self.interval(replication)
            results = self.compare_interval(interval, self.config.delta)
            rows.extend(self._comparison_rows(self._scalar_delta(), replication, results))

        mean_power: dict[str, float] = {}
        for scheme in dict.fromkeys(r.scheme for r in rows):
            powers = [r.avg_power_watts for r in rows if r.scheme == scheme]
            mean_power[scheme] = watts_to_dbm(float(np.mean(powers)))
        summary = ComparisonSummary(
            config_hash=self.config_hash,
            seed=self.config.seed,
            delta=self._scalar_delta(),
            replications=self.config.replications,
            mean_power_dbm=mean_power,
            results=rows,
        )
        if write:
            write_csv(self._path("compare.csv"), rows)
            write_json(self._path("compare_summary.json"), summary)
        return summary

    def run_sweep_delta(self, write: bool = True) -> list[ComparisonRow]:
        rows: list[ComparisonRow] = []
        for delta in self.config.delta_grid:
            for replication in range(self.config.replications):
                interval = self.interval(replication)
                rows.extend(self._comparison_rows(delta, replication, self.compare_interval(interval, delta)))
        if write:
            write_csv(self._path("sweep_delta.csv"), rows)
        return rows

    # -- quantization ---------------------------------------------------------

    def run_sweep_quant(self, write: bool = True) -> list[QuantRow]:
        """Quantize the optimized (alpha, V, W) for each bit width; no re-optimization."""
        q = self.config.quant
        theta, beta = self.env.coupling.theta, self.env.coupling.beta
        rows: list[QuantRow] = []
        for replication in range(self.config.replications):
            interval = self.interval(replication)
            optimizer = self.optimizer(interval, self.config.delta)
            qos = optimizer.config.qos
            state = optimizer.run().state

            precoders = []
            reference = []
            for channels in interval.slots:
                precoder, feasible = short_term_or_fallback(
                    state, theta, beta, channels, qos, self.config.solver.tol, self.config.solver.max_iters
                )
                precoders.append(precoder)
                reference.append(evaluate_slot(state, precoder, channels, theta, beta, qos, feasible))
            base = summarize("unquantized", reference, qos)
            rows.append(self._quant_row(replication, None, "none", base, base))

            for bits in q.bits:
                spec = QuantSpec(bits=bits, mu=q.mu, complex_mode=q.complex_mode)
                outcomes = []
                for channels, precoder in zip(interval.slots, precoders):
                    q_state, q_precoder = quantize_state(state, precoder, spec)
                    outcomes.append(evaluate_slot(q_state, q_precoder, channels, theta, beta, qos))
                rows.append(
                    self._quant_row(replication, bits, q.complex_mode.value, summarize(f"q{bits}", outcomes, qos), base)
                )
        if write:
            write_csv(self._path("sweep_quant.csv"), rows)
        return rows

    def _quant_row(
        self,
        replication: int,
        bits: Optional[int],
        mode: str,
        result: BaselineResult,
        base: BaselineResult,
    ) -> QuantRow:
        if base.avg_power_watts > 0 and result.avg_power_watts > 0:
            gap_db = 10.0 * np.log10(result.avg_power_watts / base.avg_power_watts)
        else:
            gap_db = 0.0
        mean_se = float(np.mean(result.avg_se_per_user))
        return QuantRow(
            config_hash=self.config_hash,
            seed=self.config.seed,
            replication=replication,
            bits=bits,
            mode=mode,
            avg_power_watts=result.avg_power_watts,
            avg_power_dbm=result.avg_power_dbm,
            power_gap_db=float(gap_db),
            mean_se=mean_se,
            se_gap=float(np.mean(base.avg_se_per_user)) - mean_se,
            qos_violation_rate=result.qos_violation_rate,
        )
