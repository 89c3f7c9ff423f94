from __future__ import annotations

import logging
import math
import time
from dataclasses import dataclass, replace
from typing import Optional, Tuple

import numpy as np

from .config import ExperimentConfig, UQConfig
from .exceptions import ConfigError
from .operators import LinearOperator, wavelet_analysis_operator, wavelet_synthesis_operator, bandlimit_operator
from .priors import RegSpec, area_weights
from .scenarios import Simulation, simulate
from .solvers import ProblemSpec, ProgressCallback, SolveResult, SolverOptions, data_fidelity, degrees_of_freedom, solve
from .sphere import SphGrid, SphMap, as_values
from .uq import (
    CredibleThreshold,
    HypothesisResult,
    LCIMap,
    SuperPixelPartition,
    hypothesis_test,
    lci_map,
    make_cap_partition,
    make_rect_partition,
    map_threshold,
    remove_feature,
)
from .wavelets import WaveletParams, build_kernels

logger = logging.getLogger(__name__)

SNR_CAP_DB = 300.0
NOISELESS_FLOOR = 1e-3


def snr(x_true, x_est, weights: Optional[np.ndarray] = None) -> float:
    """20 log10(||x|| / ||x - x_est||) in the area-weighted l2 norm, capped at +-300 dB."""
    truth = np.asarray(as_values(x_true))
    estimate = np.asarray(as_values(x_est))
    if truth.shape != estimate.shape:
        raise ValueError(f"Shapes differ: {truth.shape} vs {estimate.shape}.")
    if weights is None and isinstance(x_true, SphMap):
        weights = x_true.grid.pixel_areas
    scale = np.sqrt(weights) if weights is not None else 1.0
    signal = float(np.linalg.norm(scale * truth))
    error = float(np.linalg.norm(scale * (truth - estimate)))
    if error == 0.0:
        return SNR_CAP_DB
    if signal == 0.0:
        return -SNR_CAP_DB
    return float(np.clip(20.0 * math.log10(signal / error), -SNR_CAP_DB, SNR_CAP_DB))


def default_delta(M: int) -> float:
    """Chi-square upper bound (M + 2 sqrt(M)) / 2 on ||n||^2 / (2 sigma^2)."""
    return 0.5 * (M + 2.0 * math.sqrt(M))


def effective_sigma(sim: Simulation) -> float:
    if sim.sigma > 0.0:
        return sim.sigma
    rms = float(np.linalg.norm(sim.y) / math.sqrt(max(sim.y.size, 1)))
    return max(NOISELESS_FLOOR * rms, np.finfo(float).tiny)


def _wavelet_pair(cfg: ExperimentConfig, grid: SphGrid) -> Tuple[LinearOperator, LinearOperator]:
    params = WaveletParams(grid.L, cfg.wavelet.dilation, cfg.wavelet.J0, cfg.wavelet.N)
    kernels = build_kernels(params)
    return wavelet_analysis_operator(kernels, grid), wavelet_synthesis_operator(kernels, grid)


def build_problem(cfg: ExperimentConfig, sim: Simulation) -> ProblemSpec:
    """ProblemSpec for a simulated experiment; the regulariser follows the sphere-weighted norms."""
    grid = sim.grid
    dictionary = sim.dictionary
    domain = cfg.domain
    bandlimit = bandlimit_operator(grid) if cfg.bandlimit else None

    if cfg.setting == "synthesis" and dictionary is None:
        if cfg.regularizer != "wavelet-l1":
            logger.info("synthesis with '%s' regularises wavelet coefficients directly", cfg.regularizer)
        _, dictionary = _wavelet_pair(cfg, grid)
        if cfg.wavelet.N > 1:
            # directional coefficients of a real map are complex
            domain = "complex"

    if cfg.setting == "synthesis":
        regularizer = RegSpec(cfg.regularizer, p=cfg.p)
    elif cfg.regularizer == "tv":
        regularizer = RegSpec.tv(grid, weights=area_weights(grid))
    elif cfg.regularizer == "wavelet-l1":
        analysis, _ = _wavelet_pair(cfg, grid)
        regularizer = RegSpec("wavelet-l1", weights=area_weights(grid), transform=analysis)
    elif cfg.regularizer == "l2-squared":
        regularizer = RegSpec("l2-squared", weights=area_weights(grid, 2.0))
    else:
        regularizer = RegSpec("weighted-lp", p=cfg.p, weights=area_weights(grid, cfg.p))

    M = degrees_of_freedom(sim.M, "complex" if sim.complex_data else "real")
    constrained = cfg.formulation == "constrained"
    return ProblemSpec(
        phi=sim.phi,
        y=sim.y,
        sigma=effective_sigma(sim),
        regularizer=regularizer,
        setting=cfg.setting,
        formulation=cfg.formulation,
        lam=None if constrained else cfg.lam,
        delta=(cfg.delta if cfg.delta is not None else default_delta(M)) if constrained else None,
        dictionary=dictionary if cfg.setting == "synthesis" else None,
        bandlimit=bandlimit,
        domain=domain,
    )


def solver_options(cfg: ExperimentConfig, callback: Optional[ProgressCallback] = None) -> SolverOptions:
    return SolverOptions(
        max_iter=cfg.solver.max_iter,
        tol=cfg.solver.tol,
        objective_tol=cfg.solver.objective_tol,
        accelerate=cfg.solver.accelerate,
        rho=cfg.solver.rho,
        marginalize=cfg.formulation == "unconstrained" and cfg.auto_lambda,
        callback=callback,
    )


@dataclass
class Reconstruction:
    config: ExperimentConfig
    simulation: Simulation
    problem: ProblemSpec
    result: SolveResult
    estimate: SphMap
    snr_db: float
    input_snr_db: float
    wall_time: float
    fidelity: float

    @property
    def feasible(self) -> Optional[bool]:
        if self.problem.formulation != "constrained":
            return None
        return self.fidelity <= self.problem.delta * (1.0 + 1e-6)

    def resolved_problem(self) -> ProblemSpec:
        """The problem with the final (possibly marginalised) lambda fixed."""
        return replace(self.problem, lam=self.result.lam)


def _estimate_map(sim: Simulation, result: SolveResult, domain: str) -> SphMap:
    values = result.solution
    if domain != "complex" or not np.iscomplexobj(sim.truth.values):
        values = np.real(values)
    return SphMap(sim.grid, 0, values)


def reconstruct(
    cfg: ExperimentConfig,
    sim: Optional[Simulation] = None,
    callback: Optional[ProgressCallback] = None,
) -> Reconstruction:
    sim = sim if sim is not None else simulate(cfg)
    problem = build_problem(cfg, sim)
    started = time.perf_counter()
    result = solve(problem, solver_options(cfg, callback), cfg.algorithm)
    wall_time = time.perf_counter() - started

    estimate = _estimate_map(sim, result, problem.domain)
    input_snr = float("nan")
    if sim.mask.M == sim.grid.size and sim.spin == 0 and sim.y.size == sim.grid.size:
        input_snr = snr(sim.truth, sim.observed_map())
    run = Reconstruction(
        config=cfg,
        simulation=sim,
        problem=problem,
        result=result,
        estimate=estimate,
        snr_db=snr(sim.truth, estimate),
        input_snr_db=input_snr,
        wall_time=wall_time,
        fidelity=data_fidelity(problem, result.latent),
    )
    logger.info("%s/%s/%s: SNR %.2f dB in %d iterations", cfg.scenario, cfg.setting, cfg.formulation, run.snr_db, result.iterations)
    return run


def _require_uq(run: Reconstruction) -> UQConfig:
    if run.problem.formulation != "unconstrained":
        raise ConfigError("Uncertainty quantification needs formulation 'unconstrained'.")
    return run.config.uq if run.config.uq is not None else UQConfig()


def build_partition(uq: UQConfig, grid: SphGrid) -> SuperPixelPartition:
    if uq.partition == "cap":
        return make_cap_partition(grid, list(uq.centers), uq.radius)
    return make_rect_partition(grid, *uq.blocks)


def threshold_for(run: Reconstruction, alpha: float) -> CredibleThreshold:
    return map_threshold(run.resolved_problem(), run.result.solution, alpha)


def run_lci(run: Reconstruction) -> Tuple[LCIMap, CredibleThreshold]:
    uq = _require_uq(run)
    problem = run.resolved_problem()
    threshold = threshold_for(run, uq.alpha)
    partition = build_partition(uq, run.simulation.grid)
    intervals = lci_map(problem, run.result.solution, partition, threshold, uq.method, workers=uq.workers)
    return intervals, threshold


def feature_region(uq: UQConfig, grid: SphGrid) -> np.ndarray:
    if uq.feature is None:
        raise ConfigError("uq.feature is required for hypothesis testing.")
    r0, r1, c0, c1 = uq.feature
    if not (r0 < r1 <= grid.n_theta and c0 < c1 <= grid.n_phi):
        raise ConfigError(f"uq.feature must select a non-empty block inside the {grid.shape} grid.")
    region = np.zeros(grid.shape, dtype=bool)
    region[r0:r1, c0:c1] = True
    return region


def run_hypothesis_test(run: Reconstruction) -> Tuple[HypothesisResult, SphMap]:
    uq = _require_uq(run)
    region = feature_region(uq, run.simulation.grid)
    surrogate = remove_feature(run.result.solution, region)
    threshold = threshold_for(run, uq.alpha)
    outcome = hypothesis_test(run.resolved_problem(), surrogate, threshold)
    values = np.real(surrogate) if run.problem.domain != "complex" else surrogate
    return outcome, SphMap(run.simulation.grid, 0, values)
