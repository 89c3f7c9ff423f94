"""Proximal solvers for sphere imaging problems.

Every solver works on the latent variable of a :class:`ProblemSpec`: the pixel map in
the analysis setting, the dictionary coefficients in the synthesis setting. The data
fidelity is f(u) = ||A u - y||^2 / (2 sigma^2) with A the full forward model (dictionary,
optional band-limiting projector, measurement operator, optional data weights).
"""

from __future__ import annotations

import logging
import math
import warnings
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Optional, Tuple

import numpy as np

from .exceptions import (
    CompositionError,
    ConvergenceWarning,
    DimensionError,
    InvalidParameterError,
    StabilityError,
)
from .operators import Domain, LinearOperator, call_counts, compose, operator_norm
from .priors import RegSpec, project_l2_ball

logger = logging.getLogger(__name__)

ProgressCallback = Callable[[int, float, Tuple[float, ...]], None]

SETTINGS = ("analysis", "synthesis")
FORMULATIONS = ("unconstrained", "constrained")
DOMAINS = ("complex", "real", "real-nonnegative")
ALGORITHMS = ("forward-backward", "primal-dual", "admm")

LAMBDA_MAX = 1e12
FEASIBILITY_SLACK = 1e-6


@dataclass(frozen=True, eq=False)
class ProblemSpec:
    phi: LinearOperator
    y: np.ndarray
    sigma: float
    regularizer: RegSpec
    setting: str = "analysis"
    formulation: str = "unconstrained"
    lam: Optional[float] = None
    delta: Optional[float] = None
    dictionary: Optional[LinearOperator] = None
    bandlimit: Optional[LinearOperator] = None
    domain: str = "complex"

    def __post_init__(self) -> None:
        if self.setting not in SETTINGS:
            raise InvalidParameterError(f"setting must be one of {SETTINGS} (got '{self.setting}').")
        if self.formulation not in FORMULATIONS:
            raise InvalidParameterError(f"formulation must be one of {FORMULATIONS} (got '{self.formulation}').")
        if self.domain not in DOMAINS:
            raise InvalidParameterError(f"domain must be one of {DOMAINS} (got '{self.domain}').")
        if not self.sigma > 0.0:
            raise InvalidParameterError(f"Noise level sigma must be positive (got {self.sigma}).")
        if self.formulation == "constrained":
            if self.delta is None or not self.delta > 0.0:
                raise InvalidParameterError("Constrained problems need delta > 0.")
            if self.lam is not None:
                raise InvalidParameterError("Constrained problems take delta, not lambda.")
        else:
            if self.delta is not None:
                raise InvalidParameterError("Unconstrained problems take lambda, not delta.")
            if self.lam is not None and self.lam < 0.0:
                raise InvalidParameterError(f"lambda must be non-negative (got {self.lam}).")
        if np.shape(self.y) != self.phi.out_domain.shape:
            raise DimensionError(
                f"Data has shape {np.shape(self.y)}, measurement operator produces {self.phi.out_domain.shape}."
            )
        if self.setting == "synthesis":
            if self.dictionary is None:
                raise InvalidParameterError("The synthesis setting needs a dictionary operator.")
            if self.dictionary.out_domain != self.phi.in_domain:
                raise CompositionError(1, self.dictionary.out_domain, self.phi.in_domain)
            if self.bandlimit is not None:
                raise InvalidParameterError("A band-limiting pre-operator only applies to the analysis setting.")
        if self.bandlimit is not None and self.bandlimit.out_domain != self.phi.in_domain:
            raise CompositionError(1, self.bandlimit.out_domain, self.phi.in_domain)
        transform = self.regularizer.transform
        if transform is not None and transform.in_domain != self.latent_domain:
            raise CompositionError(0, self.latent_domain, transform.in_domain)

    @property
    def latent_domain(self) -> Domain:
        if self.setting == "synthesis":
            return self.dictionary.in_domain
        return self.phi.in_domain

    def forward_model(self) -> LinearOperator:
        stages: List[LinearOperator] = []
        if self.setting == "synthesis":
            stages.append(self.dictionary)
        elif self.bandlimit is not None:
            stages.append(self.bandlimit)
        stages.append(self.phi)
        return stages[0] if len(stages) == 1 else compose(stages)

    def data(self) -> np.ndarray:
        return np.asarray(self.y, dtype=np.complex128)

    def to_signal(self, u: np.ndarray) -> np.ndarray:
        if self.setting == "synthesis":
            return self.dictionary.apply(u)
        if self.bandlimit is not None:
            return self.bandlimit.apply(u)
        return u

    @property
    def data_radius(self) -> float:
        """epsilon with f(u) <= delta  <=>  ||A u - y|| <= epsilon."""
        return self.sigma * math.sqrt(2.0 * self.delta)


@dataclass(frozen=True)
class SolverOptions:
    max_iter: int = 2000
    tol: float = 1e-6
    objective_tol: float = 1e-8
    step: Optional[float] = None
    dual_step: Optional[float] = None
    accelerate: bool = True
    marginalize: bool = False
    alpha_h: float = 1.0
    beta_h: float = 1e-8
    lambda_every: int = 10
    rho: float = 1.0
    norm_iter: int = 100
    callback: Optional[ProgressCallback] = None


@dataclass
class SolveResult:
    solution: np.ndarray
    latent: np.ndarray
    setting: str
    objective: List[float] = field(default_factory=list)
    iterations: int = 0
    converged: bool = False
    lam: Optional[float] = None
    lam_trace: List[float] = field(default_factory=list)
    residuals: List[Tuple[float, ...]] = field(default_factory=list)
    operator_calls: Dict[str, int] = field(default_factory=dict)
    step: Optional[float] = None

    @property
    def coefficients(self) -> Optional[np.ndarray]:
        return self.latent if self.setting == "synthesis" else None


def degrees_of_freedom(size: int, domain: str) -> int:
    """Real degrees of freedom: complex entries count twice."""
    return 2 * size if domain == "complex" else size


def update_lambda_hierarchical(
    g_val: float, N: int, k: int, alpha_h: float = 1.0, beta_h: float = 1e-8
) -> float:
    """Gamma-hyperprior MM update lambda = (N/k + alpha - 1) / (g + beta)."""
    if g_val < 0.0:
        raise InvalidParameterError(f"Regulariser value must be non-negative (got {g_val}).")
    if N < 1:
        raise InvalidParameterError(f"Dimension must be >= 1 (got {N}).")
    if k not in (1, 2):
        raise InvalidParameterError(f"Homogeneity order must be 1 or 2 (got {k}).")
    denominator = g_val + beta_h
    if denominator <= 0.0:
        return LAMBDA_MAX
    return min((N / k + alpha_h - 1.0) / denominator, LAMBDA_MAX)


def project_domain(u: np.ndarray, domain: str) -> np.ndarray:
    if domain == "complex":
        return u
    real = np.real(u)
    if domain == "real-nonnegative":
        real = np.maximum(real, 0.0)
    return real.astype(np.complex128)


def _resolve_lambda(problem: ProblemSpec, lam: Optional[float]) -> float:
    value = problem.lam if lam is None else lam
    if value is None:
        raise InvalidParameterError("lambda is unresolved; pass it explicitly or enable marginalisation.")
    return value


def data_fidelity(problem: ProblemSpec, u: np.ndarray) -> float:
    residual = problem.forward_model().apply(u) - problem.data()
    return float(np.vdot(residual, residual).real / (2.0 * problem.sigma ** 2))


def objective_eval(problem: ProblemSpec, u: np.ndarray, lam: Optional[float] = None) -> float:
    """h(u) = f(u) + lambda g(u); for constrained problems the objective is g(u)."""
    u = np.asarray(u)
    if u.shape != problem.latent_domain.shape:
        raise DimensionError(f"Expected latent shape {problem.latent_domain.shape}, got {u.shape}.")
    if problem.formulation == "constrained":
        return problem.regularizer.value(u)
    return data_fidelity(problem, u) + _resolve_lambda(problem, lam) * problem.regularizer.value(u)


class _Run:
    """Iterate bookkeeping shared by the three solvers."""

    def __init__(self, problem: ProblemSpec, options: SolverOptions, name: str) -> None:
        if options.max_iter < 1:
            raise InvalidParameterError(f"max_iter must be >= 1 (got {options.max_iter}).")
        self.problem = problem
        self.options = options
        self.name = name
        self.model = problem.forward_model()
        self.y = problem.data()
        self.sigma2 = problem.sigma ** 2
        self.reg = problem.regularizer
        self.constrained = problem.formulation == "constrained"
        self.marginalize = not self.constrained and (options.marginalize or problem.lam is None)
        self.N = degrees_of_freedom(int(np.prod(problem.latent_domain.shape)), problem.domain)
        self.lam = 1.0 if self.constrained else problem.lam
        self.lam_trace: List[float] = []
        self.objective: List[float] = []
        self.residuals: List[Tuple[float, ...]] = []
        self.previous_objective: Optional[float] = None
        self.lam_change = math.inf

    def start(self) -> np.ndarray:
        u = np.zeros(self.problem.latent_domain.shape, dtype=np.complex128)
        if self.marginalize and self.lam is None:
            warm = project_domain(self.model.adjoint(self.y), self.problem.domain)
            self.update_lambda(warm)
        return u

    def update_lambda(self, u: np.ndarray) -> None:
        previous = self.lam
        self.lam = update_lambda_hierarchical(
            self.reg.value(u), self.N, self.reg.homogeneity, self.options.alpha_h, self.options.beta_h
        )
        if previous:
            self.lam_change = abs(self.lam - previous) / previous
        self.lam_trace.append(self.lam)
        logger.debug("%s: lambda -> %.6g", self.name, self.lam)

    def maybe_update_lambda(self, iteration: int, u: np.ndarray) -> None:
        if self.marginalize and iteration % self.options.lambda_every == 0:
            self.update_lambda(u)

    def fidelity(self, model_u: np.ndarray) -> float:
        residual = model_u - self.y
        return float(np.vdot(residual, residual).real / (2.0 * self.sigma2))

    def evaluate(self, u: np.ndarray, model_u: np.ndarray) -> float:
        if self.constrained:
            return self.reg.value(u)
        return self.fidelity(model_u) + self.lam * self.reg.value(u)

    def feasible(self, model_u: np.ndarray) -> bool:
        return not self.constrained or self.fidelity(model_u) <= self.problem.delta * (1.0 + FEASIBILITY_SLACK)

    def record(self, iteration: int, value: float, residuals: Tuple[float, ...]) -> None:
        self.objective.append(value)
        self.residuals.append(residuals)
        if self.options.callback is not None:
            self.options.callback(iteration, value, residuals)

    def settled(self, change: float, value: float) -> bool:
        previous = self.previous_objective
        self.previous_objective = value
        if previous is None:
            return False
        objective_change = abs(value - previous) / max(abs(previous), np.finfo(float).tiny)
        lam_steady = not self.marginalize or self.lam_change < self.options.tol
        return change < self.options.tol and objective_change < self.options.objective_tol and lam_steady

    def finish(self, u: np.ndarray, iterations: int, converged: bool, step: Optional[float]) -> SolveResult:
        if not converged:
            logger.warning("%s stopped at max_iter=%d before meeting the tolerances", self.name, iterations)
            warnings.warn(f"{self.name} reached max_iter={iterations}", ConvergenceWarning, stacklevel=3)
        else:
            logger.info("%s converged in %d iterations", self.name, iterations)
        return SolveResult(
            solution=self.problem.to_signal(u),
            latent=u,
            setting=self.problem.setting,
            objective=self.objective,
            iterations=iterations,
            converged=converged,
            lam=None if self.constrained else self.lam,
            lam_trace=self.lam_trace,
            residuals=self.residuals,
            operator_calls=call_counts(self.model),
            step=step,
        )


def _relative_change(new: np.ndarray, old: np.ndarray) -> float:
    return float(np.linalg.norm(new - old) / max(np.linalg.norm(new), np.finfo(float).tiny))


def _lipschitz(model: LinearOperator, sigma2: float, options: SolverOptions) -> float:
    norm = operator_norm(model, max_iter=options.norm_iter)
    return max(norm * norm / sigma2, np.finfo(float).tiny)


def forward_backward(problem: ProblemSpec, options: Optional[SolverOptions] = None) -> SolveResult:
    """Proximal gradient (optionally FISTA-accelerated) for the unconstrained formulation."""
    options = options or SolverOptions()
    if problem.formulation != "unconstrained":
        raise InvalidParameterError("forward-backward solves the unconstrained formulation only.")
    run = _Run(problem, options, "forward-backward")
    lipschitz = _lipschitz(run.model, run.sigma2, options)
    step = options.step if options.step is not None else 1.0 / lipschitz
    while step > 2.0 / lipschitz:
        logger.warning("Step %.3g exceeds the stability bound %.3g; halving", step, 2.0 / lipschitz)
        step *= 0.5
    logger.info("forward-backward: step=%.4g, Lipschitz=%.4g", step, lipschitz)

    u = run.start()
    momentum = u.copy()
    t = 1.0
    model_u = run.model.apply(u)
    value = run.evaluate(u, model_u)
    prox_state: Dict[str, np.ndarray] = {}
    converged = False
    iteration = 0
    for iteration in range(1, options.max_iter + 1):
        base = momentum if options.accelerate else u
        model_base = run.model.apply(base) if options.accelerate else model_u
        gradient = run.model.adjoint(model_base - run.y) / run.sigma2
        candidate = project_domain(
            run.reg.prox(base - step * gradient, step * run.lam, prox_state), problem.domain
        )
        model_candidate = run.model.apply(candidate)
        candidate_value = run.evaluate(candidate, model_candidate)

        if not options.accelerate and candidate_value > value + 1e-12 * max(1.0, abs(value)):
            if not run.marginalize:
                step *= 0.5
                logger.warning("Objective increased; halving step to %.4g", step)
                continue

        if options.accelerate:
            t_next = 0.5 * (1.0 + math.sqrt(1.0 + 4.0 * t * t))
            momentum = candidate + ((t - 1.0) / t_next) * (candidate - u)
            t = t_next
        change = _relative_change(candidate, u)
        u, model_u, value = candidate, model_candidate, candidate_value
        run.record(iteration, value, (change,))
        if run.settled(change, value):
            converged = True
            break
        run.maybe_update_lambda(iteration, u)
    return run.finish(u, iteration, converged, step)


def _data_dual_prox(run: _Run, q: np.ndarray, sigma: float) -> np.ndarray:
    if run.constrained:
        return q - sigma * project_l2_ball(q / sigma, run.y, run.problem.data_radius)
    return (q - sigma * run.y) / (1.0 + sigma * run.sigma2)


def primal_dual(problem: ProblemSpec, options: Optional[SolverOptions] = None) -> SolveResult:
    """Chambolle-Pock iterations with the regulariser and the data term both dualised."""
    options = options or SolverOptions()
    run = _Run(problem, options, "primal-dual")
    transform = run.reg.transform
    norm_a = max(operator_norm(run.model, max_iter=options.norm_iter), np.finfo(float).tiny) * 1.01
    norm_k = 1.0
    if transform is not None:
        norm_k = (
            math.sqrt(run.reg.transform_norm_sq)
            if run.reg.transform_norm_sq
            else 1.01 * operator_norm(transform, max_iter=options.norm_iter)
        )

    if options.step is not None or options.dual_step is not None:
        tau = options.step if options.step is not None else 0.49 / max(norm_k, norm_a)
        sigma_k = sigma_a = options.dual_step if options.dual_step is not None else 1.0 / max(norm_k, norm_a)
        product = tau * sigma_k * (norm_k ** 2 + norm_a ** 2)
        if product >= 1.0:
            raise StabilityError(
                f"Primal-dual steps violate tau*sigma*||K||^2 < 1 (product {product:.4g})."
            )
    else:
        sigma_k, sigma_a = 1.0 / norm_k, 1.0 / norm_a
        tau = 0.49 * min(1.0 / norm_k, 1.0 / norm_a)
    logger.info("primal-dual: tau=%.4g, sigma=(%.4g, %.4g)", tau, sigma_k, sigma_a)

    def apply_k(u: np.ndarray) -> np.ndarray:
        return transform.apply(u) if transform is not None else u

    def adjoint_k(v: np.ndarray) -> np.ndarray:
        return transform.adjoint(v) if transform is not None else v

    u = run.start()
    extrapolated = u.copy()
    dual_reg = np.zeros(transform.out_domain.shape if transform is not None else u.shape, dtype=np.complex128)
    dual_data = np.zeros(run.y.shape, dtype=np.complex128)
    converged = False
    iteration = 0
    for iteration in range(1, options.max_iter + 1):
        dual_reg = run.reg.dual_prox(dual_reg + sigma_k * apply_k(extrapolated), sigma_k, run.lam)
        dual_data = _data_dual_prox(run, dual_data + sigma_a * run.model.apply(extrapolated), sigma_a)
        updated = project_domain(
            u - tau * (adjoint_k(dual_reg) + run.model.adjoint(dual_data)), problem.domain
        )
        extrapolated = 2.0 * updated - u
        model_u = run.model.apply(updated)
        change = _relative_change(updated, u)
        u = updated
        value = run.evaluate(u, model_u)
        data_residual = float(np.linalg.norm(model_u - run.y))
        run.record(iteration, value, (change, data_residual))
        if run.settled(change, value) and run.feasible(model_u):
            converged = True
            break
        run.maybe_update_lambda(iteration, u)
    return run.finish(u, iteration, converged, tau)


def admm(problem: ProblemSpec, options: Optional[SolverOptions] = None) -> SolveResult:
    """Linearised ADMM splitting z = A u - y; the z-step is a ball projection when constrained."""
    options = options or SolverOptions()
    if not options.rho > 0.0:
        raise InvalidParameterError(f"ADMM penalty rho must be positive (got {options.rho}).")
    run = _Run(problem, options, "admm")
    rho = options.rho
    norm_a = max(operator_norm(run.model, max_iter=options.norm_iter), np.finfo(float).tiny) * 1.01
    step = options.step if options.step is not None else 1.0 / (rho * norm_a ** 2)
    if step * rho * norm_a ** 2 > 1.0 + 1e-12:
        raise StabilityError(f"ADMM step {step:.4g} exceeds 1/(rho ||A||^2) = {1.0 / (rho * norm_a ** 2):.4g}.")
    logger.info("admm: rho=%.4g, step=%.4g", rho, step)

    u = run.start()
    model_u = run.model.apply(u)
    split = np.zeros_like(run.y)
    scaled_dual = np.zeros_like(run.y)
    prox_state: Dict[str, np.ndarray] = {}
    converged = False
    iteration = 0
    for iteration in range(1, options.max_iter + 1):
        residual = model_u - run.y - split + scaled_dual
        updated = project_domain(
            run.reg.prox(u - step * rho * run.model.adjoint(residual), step * run.lam, prox_state),
            problem.domain,
        )
        model_updated = run.model.apply(updated)
        target = model_updated - run.y + scaled_dual
        if run.constrained:
            split_next = project_l2_ball(target, 0.0, run.problem.data_radius)
        else:
            split_next = rho * target / (rho + 1.0 / run.sigma2)
        primal_residual = model_updated - run.y - split_next
        scaled_dual = scaled_dual + primal_residual
        dual_residual = rho * norm_a * float(np.linalg.norm(split_next - split))

        change = _relative_change(updated, u)
        u, model_u, split = updated, model_updated, split_next
        value = run.evaluate(u, model_u)
        primal_norm = float(np.linalg.norm(primal_residual))
        run.record(iteration, value, (change, primal_norm, dual_residual))
        scale = max(1.0, float(np.linalg.norm(run.y)))
        if run.settled(change, value) and primal_norm <= options.tol * scale and run.feasible(model_u):
            converged = True
            break
        run.maybe_update_lambda(iteration, u)
    return run.finish(u, iteration, converged, step)


SOLVERS = {
    "forward-backward": forward_backward,
    "primal-dual": primal_dual,
    "admm": admm,
}


def solve(problem: ProblemSpec, options: Optional[SolverOptions] = None, algorithm: str = "forward-backward") -> SolveResult:
    try:
        solver = SOLVERS[algorithm]
    except KeyError:
        raise InvalidParameterError(f"Unknown algorithm '{algorithm}' (expected one of {ALGORITHMS}).") from None
    return solver(problem, options)
