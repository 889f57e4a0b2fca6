import logging
import math
from dataclasses import dataclass, replace
from typing import Callable, Dict, Iterator, List, Optional, Tuple

import numpy as np

from bqpe.calibration import calibration_betas, d_model, fit_q_omega, q_model, split_times
from bqpe.consts import SNAPSHOT_ROUNDS, SYNTHETIC_ARMS
from bqpe.design import ExperimentDesigner
from bqpe.hamiltonian import HamiltonianModel, load_dataset
from bqpe.iceberg import IcebergCode
from bqpe.models import (
    CalibrationPoint,
    ExperimentParams,
    Likelihood,
    NoiseModel,
    PhasePosterior,
    RoundRecord,
    RunConfig,
    RunLog,
    ShotRecord,
    SpinHamiltonian,
    TrotterConfig,
)
from bqpe.posterior import CircularStatistics, PosteriorUpdater
from bqpe.simulator import CircuitBuilder, ShotSampler

logger = logging.getLogger(__name__)

TWO_PI = 2.0 * math.pi

# encoded shot records of one calibration point: (k, beta, records)
ShotBatch = Tuple[int, float, List[ShotRecord]]


@dataclass
class ProblemContext:
    """Hamiltonian-derived quantities shared by every round of a run."""

    hamiltonian: SpinHamiltonian
    exact_energy: float
    hf_energy: float
    phi0: float
    system_state: np.ndarray


class RunSelector:
    """Round-level parameter choice for the configured strategy."""

    @staticmethod
    def choose(
        post: PhasePosterior,
        config: RunConfig,
        noise_fn: Callable[[int], float],
        rng: np.random.Generator,
    ) -> ExperimentParams:
        if config.selection == "heuristic":
            return ExperimentDesigner.heuristic_params(post, config.k_max, rng)
        return ExperimentDesigner.optimal_params(post, noise_fn, config.k_max)


class RunService:
    """Orchestrates synthetic, calibration and Bayesian QPE runs with inspection capabilities."""

    def __init__(self, enable_inspection: bool = True):
        self.enable_inspection = enable_inspection
        self.last_run_log: Optional[RunLog] = None

    def inspect_last_run(self) -> Optional[dict]:
        """Get inspection data for the last run."""
        if self.last_run_log is None:
            return None
        return self.last_run_log.get_summary()

    def _remember(self, log: RunLog) -> RunLog:
        if self.enable_inspection:
            self.last_run_log = log
            logger.info(f"Run summary: {log.get_summary() | {'posterior': None}}")
        return log

    @staticmethod
    def build_context(config: RunConfig) -> ProblemContext:
        h, _ = load_dataset(config.hamiltonian)
        phi0, vec = HamiltonianModel.trotter_eigenphase(h, TrotterConfig(config.t, config.s), config.t_split)
        return ProblemContext(
            hamiltonian=h,
            exact_energy=HamiltonianModel.exact_ground(h).ground_energy,
            hf_energy=HamiltonianModel.hartree_fock_energy(h),
            phi0=phi0,
            system_state=vec,
        )

    @staticmethod
    def noise_model(config: RunConfig) -> NoiseModel:
        return NoiseModel(config.p2, config.memory_gamma, config.delta_bar, config.noise_mode)

    @staticmethod
    def _round_record(
        r: int,
        params: ExperimentParams,
        m: int,
        q: float,
        post: PhasePosterior,
        converted: bool,
        t: Optional[float] = None,
        branch_center: Optional[float] = None,
        **extra,
    ) -> RoundRecord:
        m1 = CircularStatistics.first_moment(post)
        var_h = CircularStatistics.holevo_variance(post)
        energy = stderr = None
        if t is not None:
            energy = HamiltonianModel.energy_from_phase(math.atan2(m1.imag, m1.real) % TWO_PI, t, branch_center)
            stderr = math.sqrt(var_h) / abs(t)
        return RoundRecord(
            r=r,
            k=params.k,
            beta=params.beta,
            m=m,
            q_used=q,
            representation=post.kind,
            J=post.representation.J if post.is_fourier else None,
            m1_real=m1.real,
            m1_imag=m1.imag,
            var_c=CircularStatistics.circular_variance(post),
            var_h=var_h,
            energy=energy,
            energy_stderr=stderr,
            converted=converted,
            **extra,
        )

    # -- synthetic likelihood runs ---------------------------------------------

    def _synthetic_rounds(
        self, config: RunConfig, phi_star: float, rng: np.random.Generator
    ) -> Iterator[Tuple[RoundRecord, PhasePosterior]]:
        post = PhasePosterior.uniform(config.representation, config.j_max)
        for r in range(1, config.resolved_max_updates + 1):
            params = RunSelector.choose(post, config, lambda k: config.q, rng)
            lik = Likelihood(params.k, params.beta, config.q)
            m = 0 if rng.random() < lik.prob(0, phi_star) else 1
            was_fourier = post.is_fourier
            post = PosteriorUpdater.adaptive_update(post, m, params.k, params.beta, config.q)
            record = self._round_record(
                r,
                params,
                m,
                config.q,
                post,
                converted=was_fourier and not post.is_fourier,
                cosine_distance=CircularStatistics.expected_cosine_distance(post, phi_star),
            )
            yield record, post

    def synthetic_run(
        self, config: RunConfig, phi_star: float, rng: Optional[np.random.Generator] = None
    ) -> RunLog:
        """Bayesian updates on outcomes drawn directly from the likelihood at phase phi_star."""
        rng = rng if rng is not None else np.random.default_rng(config.seed)
        log = RunLog(config=config.to_dict() | {"phi_star": phi_star})
        post = None
        for record, post in self._synthetic_rounds(config, phi_star, rng):
            log.append(record)
        log.posterior = post.to_dict() if post is not None else None
        return self._remember(log)

    def synthetic_experiment(self, config: RunConfig) -> Dict[str, List[RunLog]]:
        """Every strategy arm on the same n_phases random phases."""
        children = np.random.SeedSequence(config.seed).spawn(config.n_phases)
        results: Dict[str, List[RunLog]] = {arm: [] for arm in SYNTHETIC_ARMS}
        inspection, self.enable_inspection = self.enable_inspection, False
        try:
            for child in children:
                phase_rng, *arm_seeds = child.spawn(len(SYNTHETIC_ARMS) + 1)
                phi_star = float(np.random.default_rng(phase_rng).uniform(0.0, TWO_PI))
                for (arm, (representation, selection)), seed in zip(SYNTHETIC_ARMS.items(), arm_seeds):
                    arm_config = replace(config, mode="synthetic", representation=representation, selection=selection)
                    results[arm].append(self.synthetic_run(arm_config, phi_star, np.random.default_rng(seed)))
        finally:
            self.enable_inspection = inspection
        for arm, logs in results.items():
            final = np.mean([log.records[-1].cosine_distance for log in logs if log.records])
            logger.info(f"Synthetic arm {arm}: mean final cosine distance {final:.3e} over {len(logs)} phases")
        return results

    def posterior_snapshots(
        self, config: RunConfig, phi_star: float, rounds: int = SNAPSHOT_ROUNDS
    ) -> List[Tuple[int, PhasePosterior]]:
        """Posteriors after each of the first ``rounds`` synthetic updates."""
        short = replace(config, max_updates=rounds)
        rng = np.random.default_rng(config.seed)
        return [(record.r, post) for record, post in self._synthetic_rounds(short, phi_star, rng)]

    # -- Bayesian QPE against the simulator ------------------------------------

    def bayesian_qpe_run(self, config: RunConfig, context: Optional[ProblemContext] = None) -> RunLog:
        """Adaptive Bayesian QPE, one shot per update (retried until accepted when encoded)."""
        if config.mode not in ("unencoded", "encoded"):
            raise ValueError(f"Bayesian QPE needs mode unencoded or encoded, got {config.mode!r}")
        if self.enable_inspection:
            logger.info(f"Starting {config.mode} Bayesian QPE run: {config.to_dict()}")
        context = context or self.build_context(config)
        noise = self.noise_model(config)
        init_kind = config.resolved_init_kind
        select_seed, shot_seed = np.random.SeedSequence(config.seed).spawn(2)
        select_rng, shot_rng = np.random.default_rng(select_seed), np.random.default_rng(shot_seed)

        if config.mode == "unencoded":
            def noise_fn(k: int) -> float:
                return q_model(k, config.p2, lambda kk: CircuitBuilder.two_qubit_count(kk, config.s, init_kind))
        else:
            def noise_fn(k: int) -> float:
                return config.encoded_q

        log = RunLog(config=config.to_dict())
        post = PhasePosterior.uniform(config.representation, config.j_max)
        for r in range(1, config.resolved_max_updates + 1):
            params = RunSelector.choose(post, config, noise_fn, select_rng)
            q = noise_fn(params.k)
            if config.mode == "unencoded":
                circ = CircuitBuilder.build_qpe_circuit(
                    context.hamiltonian, params.k, params.beta, config.t, config.s, init_kind,
                    config.t_split, context.system_state,
                )
                m = ShotSampler.run_shot(circ, noise, shot_rng)
                attempts, executed, scheduled = 1, circ.two_qubit_count, circ.two_qubit_count
            else:
                circ = IcebergCode.build_encoded_qpe(
                    context.hamiltonian, params.k, params.beta, config.t, config.s, config.f, init_kind,
                    config.t_split, config.sx_insertion, context.system_state,
                )
                m, attempts, executed = None, 0, 0
                while m is None and attempts < config.attempt_cap:
                    shot = IcebergCode.run_encoded_shot(circ, noise, shot_rng)
                    attempts += 1
                    executed += shot.gates_executed_2q
                    m = shot.outcome
                scheduled = attempts * circ.two_qubit_count
                if m is None:
                    logger.warning(f"Round {r}: no accepted shot in {attempts} attempts at k={params.k}; stopping")
                    log.stop_reason = "attempt_cap"
                    break

            was_fourier = post.is_fourier
            post = PosteriorUpdater.adaptive_update(post, m, params.k, params.beta, q)
            record = self._round_record(
                r, params, m, q, post,
                converted=was_fourier and not post.is_fourier,
                t=config.t,
                branch_center=context.hf_energy,
                n_attempts=attempts,
                gates_2q_executed=executed,
                gates_2q_scheduled=scheduled,
            )
            log.append(record)
            if r % 25 == 0:
                logger.info(
                    f"Round {r}: k={record.k}, E={record.energy:.5f}+-{record.energy_stderr:.5f} Ha "
                    f"({record.representation})"
                )
            if config.holevo_std_threshold is not None and record.energy_stderr < config.holevo_std_threshold:
                log.stop_reason = "holevo_threshold"
                break

        log.posterior = post.to_dict()
        if config.mode == "encoded":
            log.rescaled_R = self.rescaled_experiments(log)
        return self._remember(log)

    @staticmethod
    def rescaled_experiments(log: RunLog) -> float:
        """R-bar = sum over rounds of 1 / (1 - d(k_r)); equals R for unencoded runs."""
        config = log.config
        if config.get("mode") != "encoded":
            return float(log.R)
        init_kind = RunConfig.from_dict(config).resolved_init_kind
        delta = 1 if init_kind == "exact_eigenstate" else 0
        return float(
            sum(1.0 / (1.0 - d_model(record.k, config["p2"], config["f"], delta)) for record in log.records)
        )

    def seeded_runs(self, config: RunConfig, n_seeds: int) -> List[RunLog]:
        context = self.build_context(config)
        return [self.bayesian_qpe_run(replace(config, seed=config.seed + i), context) for i in range(n_seeds)]

    # -- calibration -----------------------------------------------------------

    def _calibration_points(
        self,
        config: RunConfig,
        context: ProblemContext,
        k: int,
        encoding: str,
        rng: np.random.Generator,
        t_split: Optional[Tuple[float, float]],
    ) -> Tuple[List[CalibrationPoint], dict, List[ShotBatch]]:
        noise = self.noise_model(config)
        init_kind = config.resolved_init_kind
        points, shots = [], []
        for beta in calibration_betas(k, context.phi0):
            if encoding == "unencoded":
                circ = CircuitBuilder.build_qpe_circuit(
                    context.hamiltonian, k, beta, config.t, config.s, init_kind, t_split, context.system_state
                )
                n0 = ShotSampler.sample_zero_count(circ, noise, config.calibration_shots, rng)
                points.append(CalibrationPoint(k, beta, n0, config.calibration_shots))
            else:
                circ = IcebergCode.build_encoded_qpe(
                    context.hamiltonian, k, beta, config.t, config.s, config.f, init_kind,
                    t_split, config.sx_insertion, context.system_state,
                )
                records = IcebergCode.sample_shots(circ, noise, config.calibration_shots, rng)
                kept = [rec for rec in records if not rec.discarded]
                points.append(CalibrationPoint(k, beta, sum(rec.outcome == 0 for rec in kept), len(kept)))
                shots.append((beta, records, circ))
        stats = {}
        if shots:
            all_records = [rec for _, records, _ in shots for rec in records]
            stats = {
                "discard_rate": IcebergCode.discard_fraction(all_records),
                "exit_ratio": float(np.mean([IcebergCode.conditional_exit_ratio(recs, c) for _, recs, c in shots])),
            }
        return points, stats, [(k, beta, records) for beta, records, _ in shots]

    @staticmethod
    def _fit_row(points: List[CalibrationPoint], phi0: float, k: int, encoding: str) -> dict:
        fit = fit_q_omega(points, phi0, k)
        return {"encoding": encoding, **fit.to_dict(), "omega_pi": fit.omega / math.pi}

    def fit_points(self, points: List[CalibrationPoint], phi0: float, encoding: str = "file") -> List[dict]:
        """Fit every depth present in previously recorded calibration counts."""
        return [self._fit_row(points, phi0, k, encoding) for k in sorted({p.k for p in points})]

    def calibration_sweep(
        self, config: RunConfig, encodings: Tuple[str, ...] = ("unencoded", "encoded")
    ) -> Tuple[List[dict], List[CalibrationPoint], List[ShotBatch]]:
        """Fit (q, omega) at every calibration depth.

        Returns the fit rows, the raw points and the encoded shot records per (k, beta).
        """
        context = self.build_context(config)
        init_kind = config.resolved_init_kind
        delta = 1 if init_kind == "exact_eigenstate" else 0
        seeds = np.random.SeedSequence(config.seed).spawn(len(encodings) * len(config.calibration_ks))
        rows, all_points, all_shots = [], [], []
        for i, (encoding, k) in enumerate((e, k) for e in encodings for k in config.calibration_ks):
            rng = np.random.default_rng(seeds[i])
            points, stats, shots = self._calibration_points(config, context, k, encoding, rng, config.t_split)
            if encoding == "unencoded":
                model = q_model(k, config.p2, lambda kk: CircuitBuilder.two_qubit_count(kk, config.s, init_kind))
            else:
                model = None
            rows.append(
                {
                    **self._fit_row(points, context.phi0, k, encoding),
                    "q_model": model,
                    "d_model": d_model(k, config.p2, config.f, delta) if encoding == "encoded" else None,
                    "discard_rate": stats.get("discard_rate"),
                    "exit_ratio": stats.get("exit_ratio"),
                    "sx_insertion": config.sx_insertion if encoding == "encoded" else None,
                    "p2": config.p2,
                }
            )
            all_points += points
            all_shots += shots
        return rows, all_points, all_shots

    def split_sweep(self, config: RunConfig) -> List[dict]:
        """Fitted phase shift for the unsplit schedule and every configured (t1, t2) pair."""
        schedules = [None] + [split_times(config.t, pair) for pair in config.t_split_sweep]
        rows = []
        seeds = np.random.SeedSequence(config.seed).spawn(len(schedules))
        for schedule, seed in zip(schedules, seeds):
            scheduled = replace(config, t_split=schedule)
            context = self.build_context(scheduled)
            rng = np.random.default_rng(seed)
            for k in config.calibration_ks:
                points, _, _ = self._calibration_points(scheduled, context, k, "unencoded", rng, schedule)
                fit = fit_q_omega(points, context.phi0, k)
                rows.append(
                    {
                        "t1_pi": (schedule[0] if schedule else config.t) / math.pi,
                        "t2_pi": (schedule[1] if schedule else config.t) / math.pi,
                        "k": k,
                        "q": fit.q,
                        "omega": fit.omega,
                        "omega_pi": fit.omega / math.pi,
                        "stderr_omega": fit.stderr_omega,
                        "delta_bar": config.delta_bar,
                    }
                )
        return rows


run_service = RunService(enable_inspection=True)
