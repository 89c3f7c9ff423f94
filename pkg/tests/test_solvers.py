import math

import numpy as np
import pytest
from scipy.optimize import brentq

from s2inverse.exceptions import (
    ConvergenceWarning,
    DimensionError,
    InvalidParameterError,
    StabilityError,
)
from s2inverse.operators import Domain, MaskSpec, identity, mask_operator, topography_operator
from s2inverse.priors import RegSpec, area_weights, prox_l1_weighted
from s2inverse.runner import snr
from s2inverse.solvers import (
    LAMBDA_MAX,
    ProblemSpec,
    SolverOptions,
    admm,
    degrees_of_freedom,
    forward_backward,
    objective_eval,
    primal_dual,
    solve,
    update_lambda_hierarchical,
)
from s2inverse.sphere import SphMap

TIGHT = SolverOptions(max_iter=20000, tol=1e-11, objective_tol=1e-13)


def _half_mask(grid, seed=11):
    keep = np.zeros(grid.size, dtype=bool)
    keep[np.random.default_rng(seed).permutation(grid.size)[: grid.size // 2]] = True
    return MaskSpec(keep.reshape(grid.shape))


def _vector_problem(y, **kwargs):
    y = np.asarray(y, dtype=np.float64)
    kwargs.setdefault("regularizer", RegSpec("weighted-lp"))
    kwargs.setdefault("sigma", 1.0)
    return ProblemSpec(phi=identity(Domain.vector(y.size)), y=y, **kwargs)


def test_lambda_update_closed_form():
    assert update_lambda_hierarchical(5.0, 10, 1, 1.0, 0.0) == pytest.approx(2.0)
    assert update_lambda_hierarchical(5.0, 10, 2, 1.0, 0.0) == pytest.approx(1.0)
    assert update_lambda_hierarchical(0.0, 100000, 1) == LAMBDA_MAX


def test_lambda_update_rejects_bad_input():
    with pytest.raises(InvalidParameterError):
        update_lambda_hierarchical(-1.0, 10, 1)
    with pytest.raises(InvalidParameterError):
        update_lambda_hierarchical(1.0, 10, 3)
    with pytest.raises(InvalidParameterError):
        update_lambda_hierarchical(1.0, 0, 1)


def test_degrees_of_freedom_count_complex_twice():
    assert degrees_of_freedom(10, "complex") == 20
    assert degrees_of_freedom(10, "real") == 10


def test_problem_validation():
    with pytest.raises(InvalidParameterError):
        _vector_problem([1.0], sigma=0.0)
    with pytest.raises(InvalidParameterError):
        _vector_problem([1.0], formulation="constrained")
    with pytest.raises(InvalidParameterError):
        _vector_problem([1.0], formulation="constrained", delta=1.0, lam=1.0)
    with pytest.raises(InvalidParameterError):
        _vector_problem([1.0], delta=1.0)
    with pytest.raises(InvalidParameterError):
        _vector_problem([1.0], setting="synthesis")
    with pytest.raises(DimensionError):
        ProblemSpec(phi=identity(Domain.vector(3)), y=np.zeros(2), sigma=1.0, regularizer=RegSpec("weighted-lp"))


def test_objective_needs_lambda():
    problem = _vector_problem([1.0, 2.0])
    with pytest.raises(InvalidParameterError):
        objective_eval(problem, np.zeros(2))
    assert objective_eval(problem, np.zeros(2), lam=1.0) == pytest.approx(2.5)


def test_denoising_step_is_exact_soft_threshold():
    y = np.array([3.0, -2.0, 0.4, -0.1, 1.2])
    problem = _vector_problem(y, lam=0.5, domain="real")
    result = forward_backward(problem)
    assert result.converged
    assert np.allclose(result.solution.real, prox_l1_weighted(y, 0.5), atol=1e-12)
    assert result.lam == 0.5


def test_zero_data_gives_zero_solution():
    result = forward_backward(_vector_problem(np.zeros(4), lam=1.0))
    assert result.converged
    assert np.all(result.solution == 0.0)


def test_all_solvers_agree_on_masked_lasso(grid16, rng):
    mask = _half_mask(grid16)
    phi = mask_operator(mask, grid16)
    y = rng.standard_normal(mask.M)
    weights = area_weights(grid16, 1.0)
    lam = 20.0
    problem = ProblemSpec(phi, y, 1.0, RegSpec("weighted-lp", weights=weights), lam=lam, domain="real")

    expected = np.zeros(grid16.shape)
    expected[mask.keep] = prox_l1_weighted(y, lam, weights[mask.keep])
    reference = objective_eval(problem, expected)

    for solver in (forward_backward, primal_dual, admm):
        result = solver(problem, TIGHT)
        assert objective_eval(problem, result.latent) == pytest.approx(reference, rel=1e-5)
        assert np.max(np.abs(result.solution - expected)) < 1e-3


def test_gaussian_map_matches_normal_equations(grid16, rng):
    mask = _half_mask(grid16)
    phi = topography_operator(grid16, mask)
    sigma, lam = 0.5, 1.0
    y = rng.standard_normal(mask.M) + 1j * rng.standard_normal(mask.M)
    problem = ProblemSpec(phi, y, sigma, RegSpec("l2-squared"), lam=lam)

    n = grid16.size
    basis = np.eye(n).reshape((n,) + grid16.shape)
    A = np.stack([phi.apply(e) for e in basis], axis=1)
    normal = A.conj().T @ A / sigma ** 2 + 2.0 * lam * np.eye(n)
    expected = np.linalg.solve(normal, A.conj().T @ y / sigma ** 2)

    options = SolverOptions(max_iter=5000, tol=1e-12, objective_tol=1e-14, accelerate=False)
    result = forward_backward(problem, options)
    error = np.linalg.norm(result.solution.ravel() - expected) / np.linalg.norm(expected)
    assert error < 1e-6


def test_constrained_solvers_reach_ball_boundary():
    y = np.array([3.0, -2.0, 1.0, 0.5, -0.2, 0.1])
    epsilon = 1.0
    delta = epsilon ** 2 / 2.0
    problem = _vector_problem(y, formulation="constrained", delta=delta, domain="real")
    assert problem.data_radius == pytest.approx(epsilon)

    threshold = brentq(lambda t: np.linalg.norm(np.minimum(np.abs(y), t)) - epsilon, 0.0, np.max(np.abs(y)))
    reference = np.sum(np.abs(prox_l1_weighted(y, threshold)))

    for solver in (primal_dual, admm):
        result = solver(problem, TIGHT)
        assert result.lam is None
        assert objective_eval(problem, result.latent) == pytest.approx(reference, rel=1e-5)
        residual = np.linalg.norm(result.solution - y)
        assert residual <= epsilon * (1.0 + 1e-4)


def test_forward_backward_rejects_constrained():
    problem = _vector_problem([1.0], formulation="constrained", delta=0.5)
    with pytest.raises(InvalidParameterError):
        forward_backward(problem)


def test_oversized_step_is_halved():
    result = forward_backward(_vector_problem([1.0, -1.0], lam=0.1), SolverOptions(step=10.0))
    assert result.step == pytest.approx(1.25)


def test_primal_dual_rejects_unstable_steps():
    problem = _vector_problem([1.0, -1.0], lam=0.1)
    with pytest.raises(StabilityError):
        primal_dual(problem, SolverOptions(step=1.0, dual_step=1.0))


def test_admm_parameter_checks():
    problem = _vector_problem([1.0, -1.0], lam=0.1)
    with pytest.raises(InvalidParameterError):
        admm(problem, SolverOptions(rho=0.0))
    with pytest.raises(StabilityError):
        admm(problem, SolverOptions(step=10.0))


def test_unknown_algorithm():
    with pytest.raises(InvalidParameterError):
        solve(_vector_problem([1.0], lam=1.0), algorithm="newton")


def test_max_iter_warns():
    problem = _vector_problem([3.0, -2.0], lam=0.5)
    with pytest.warns(ConvergenceWarning):
        result = primal_dual(problem, SolverOptions(max_iter=2))
    assert not result.converged
    assert result.iterations == 2


def test_scalar_lambda_marginalisation_fixed_point():
    # lambda = 1 / |x| with x = 4 - lambda settles at lambda^2 - 4 lambda + 1 = 0
    problem = _vector_problem([4.0], domain="real")
    result = forward_backward(problem, SolverOptions(marginalize=True, accelerate=False, max_iter=5000))
    assert result.converged
    assert result.lam == pytest.approx(2.0 - math.sqrt(3.0), abs=1e-5)
    assert result.lam_trace[0] == pytest.approx(0.25)


def test_analysis_and_synthesis_agree_with_identity_dictionary(grid8, rng):
    mask = _half_mask(grid8)
    phi = mask_operator(mask, grid8)
    y = rng.standard_normal(mask.M)
    options = SolverOptions(max_iter=500)
    analysis = forward_backward(ProblemSpec(phi, y, 1.0, RegSpec("weighted-lp"), lam=0.3), options)
    synthesis = forward_backward(
        ProblemSpec(
            phi,
            y,
            1.0,
            RegSpec("weighted-lp"),
            setting="synthesis",
            lam=0.3,
            dictionary=identity(Domain.pixel(grid8)),
        ),
        options,
    )
    assert synthesis.coefficients is not None
    assert analysis.coefficients is None
    assert np.allclose(analysis.solution, synthesis.solution, atol=1e-8)


def test_callback_receives_progress():
    seen = []
    forward_backward(
        _vector_problem([3.0, -2.0], lam=0.5),
        SolverOptions(callback=lambda it, value, residuals: seen.append((it, value, len(residuals)))),
    )
    assert seen[0][0] == 1
    assert all(count == 1 for _, _, count in seen)


def test_operator_calls_are_reported(grid8, rng):
    mask = _half_mask(grid8)
    problem = ProblemSpec(mask_operator(mask, grid8), rng.standard_normal(mask.M), 1.0, RegSpec("weighted-lp"), lam=0.1)
    result = admm(problem, SolverOptions(max_iter=5))
    assert result.operator_calls["D.apply"] > 0
    assert result.operator_calls["D.adjoint"] > 0


def test_data_fidelity_is_unweighted_euclidean(grid8, rng):
    phi = mask_operator(MaskSpec.full(grid8), grid8)
    y = rng.standard_normal(grid8.size)
    x = rng.standard_normal(grid8.shape)
    problem = ProblemSpec(phi, y, 0.5, RegSpec("l2-squared"), lam=1.0)
    expected = np.sum((x.ravel() - y) ** 2) / (2.0 * 0.25)
    assert objective_eval(problem, x, lam=0.0) == pytest.approx(expected, rel=1e-12)


@pytest.mark.filterwarnings("ignore::s2inverse.exceptions.ConvergenceWarning")
def test_unaccelerated_forward_backward_is_monotone(grid8, rng):
    mask = _half_mask(grid8)
    problem = ProblemSpec(
        mask_operator(mask, grid8), rng.standard_normal(mask.M), 1.0, RegSpec("weighted-lp"), lam=0.3
    )
    result = forward_backward(problem, SolverOptions(max_iter=300, accelerate=False))
    trace = np.asarray(result.objective)
    assert trace.size > 1
    assert np.all(np.diff(trace) <= 1e-12 * np.maximum(1.0, np.abs(trace[:-1])))


@pytest.mark.filterwarnings("ignore::s2inverse.exceptions.ConvergenceWarning")
def test_primal_dual_tv_denoising_improves_snr(grid16, rng):
    truth = np.zeros(grid16.shape)
    truth[: grid16.n_theta // 2] = 1.0
    y = truth + 0.3 * rng.standard_normal(grid16.shape)
    problem = ProblemSpec(
        mask_operator(MaskSpec.full(grid16), grid16), y.ravel(), 0.3, RegSpec.tv(grid16), lam=0.3, domain="real"
    )
    result = primal_dual(problem, SolverOptions(max_iter=2000))
    reference = SphMap(grid16, 0, truth)
    assert snr(reference, result.solution.real) > snr(reference, y) + 1.0
