import numpy as np
import pytest

from s2inverse.exceptions import (
    InvalidParameterError,
    InvalidRadiusError,
    NonconvexOrderError,
    UnsupportedRegularizerError,
    UnsupportedSpinError,
)
from s2inverse.operators import Domain, identity
from s2inverse.priors import (
    RegSpec,
    area_weights,
    dual_prox_l1,
    project_l2_ball,
    prox_l1_weighted,
    prox_l2_squared,
    prox_tv,
    spherical_gradient,
    tv_norm,
    wavelet_space_norm,
    weighted_lp_norm,
)
from s2inverse.sphere import FOUR_PI, SphMap


def test_soft_threshold_real():
    out = prox_l1_weighted(np.array([3.0, -1.0, 0.5, -2.5]), 1.0)
    assert np.allclose(out, [2.0, 0.0, 0.0, -1.5])


def test_soft_threshold_keeps_complex_phase():
    out = prox_l1_weighted(np.array([3.0 + 4.0j]), 1.0)
    assert np.allclose(out, [2.4 + 3.2j])


def test_soft_threshold_with_weights():
    out = prox_l1_weighted(np.array([3.0, 3.0]), 1.0, np.array([1.0, 4.0]))
    assert np.allclose(out, [2.0, 0.0])


def test_soft_threshold_rejects_negative_step():
    with pytest.raises(InvalidParameterError):
        prox_l1_weighted(np.ones(3), -0.1)


def test_ball_projection():
    inside = np.array([0.5, 0.5])
    assert np.array_equal(project_l2_ball(inside, 0.0, 1.0), inside)
    projected = project_l2_ball(np.array([3.0, 4.0]), 0.0, 1.0)
    assert np.allclose(projected, [0.6, 0.8])
    shifted = project_l2_ball(np.array([1.0, 3.0]), np.array([1.0, 1.0]), 1.0)
    assert np.allclose(shifted, [1.0, 2.0])
    with pytest.raises(InvalidRadiusError):
        project_l2_ball(inside, 0.0, 0.0)


def test_prox_l2_squared_closed_form():
    assert np.allclose(prox_l2_squared(np.array([2.0]), 1.0, center=4.0, sigma=1.0), [3.0])


def test_area_weighted_l1_integrates_constant(grid8):
    ones = SphMap(grid8, 0, np.ones(grid8.shape))
    assert weighted_lp_norm(ones, area_weights(grid8, 1.0), 1.0) == pytest.approx(FOUR_PI)
    assert weighted_lp_norm(ones, area_weights(grid8, 2.0), 2.0) == pytest.approx(np.sqrt(FOUR_PI))


def test_nonconvex_order_rejected(grid8):
    with pytest.raises(NonconvexOrderError):
        area_weights(grid8, 0.5)
    with pytest.raises(NonconvexOrderError):
        weighted_lp_norm(np.ones(3), None, 0.5)
    with pytest.raises(NonconvexOrderError):
        RegSpec("weighted-lp", p=0.5)


def test_wavelet_space_norm_sums_slices():
    stacked = np.zeros((3, 2, 3))
    stacked[0, 0, 0] = 1.0
    stacked[2, 1, 2] = -2.0
    assert wavelet_space_norm(stacked) == pytest.approx(3.0)


def test_total_variation_of_constant_is_zero(grid8):
    assert tv_norm(SphMap(grid8, 0, np.full(grid8.shape, 2.0))) == 0.0


def test_total_variation_of_ring_step(grid8):
    values = np.zeros(grid8.shape)
    values[4:] = 1.0
    step = grid8.thetas[4] - grid8.thetas[3]
    assert tv_norm(SphMap(grid8, 0, values)) == pytest.approx(grid8.n_phi / step)


def test_dual_prox_with_identity_is_soft_threshold():
    z = np.array([2.0, -0.3, 0.7, -1.5])
    result = dual_prox_l1(z, 0.5, identity(Domain.vector(4)), norm_sq=1.0)
    assert result.converged
    assert np.allclose(result.solution, prox_l1_weighted(z, 0.5), atol=1e-12)


def test_prox_tv_zero_step_and_constant(grid4):
    constant = SphMap(grid4, 0, np.full(grid4.shape, 3.0))
    assert np.allclose(prox_tv(constant, 0.0).values, 3.0)
    assert np.allclose(prox_tv(constant, 0.5).values, 3.0)


def test_prox_tv_decreases_objective(grid4, rng):
    z = SphMap(grid4, 0, rng.standard_normal(grid4.shape))
    tau = 0.05
    u = prox_tv(z, tau, max_iter=3000, tol=1e-10)
    objective_u = 0.5 * np.sum((u.values - z.values) ** 2) + tau * tv_norm(u)
    assert objective_u < tau * tv_norm(z)
    assert tv_norm(u) < tv_norm(z)
    assert not np.iscomplexobj(u.values)


@pytest.mark.filterwarnings("ignore::s2inverse.exceptions.ConvergenceWarning")
def test_prox_tv_of_ring_step_matches_tighter_solve(grid4):
    values = np.zeros(grid4.shape)
    values[2:] = 1.0
    z = SphMap(grid4, 0, values)
    tau = 0.1
    u = prox_tv(z, tau, max_iter=2000, tol=1e-14)
    reference = prox_tv(z, tau, max_iter=20000, tol=1e-14)
    assert np.max(np.abs(u.values - reference.values)) < 1e-6
    # each two-ring block moves towards the other by tau / (rings * step)
    shift = tau / (2.0 * (grid4.thetas[2] - grid4.thetas[1]))
    assert np.allclose(reference.values, np.where(values > 0.5, 1.0 - shift, shift), atol=1e-8)


def test_gradient_of_cos_theta(grid8):
    g_theta, g_phi = spherical_gradient(SphMap(grid8, 0, np.cos(grid8.thetas)[:, None] * np.ones(grid8.n_phi)))
    assert np.all(g_phi.values == 0.0)
    assert np.all(g_theta.values[-1] == 0.0)
    steps = np.diff(grid8.thetas)
    middles = 0.5 * (grid8.thetas[1:] + grid8.thetas[:-1])
    error = np.abs(g_theta.values[:-1] + np.sin(middles)[:, None])
    assert np.all(error <= (steps ** 2 / 24.0 + 1e-12)[:, None])


def test_proxes_are_firmly_nonexpansive(rng):
    weights = rng.uniform(0.5, 2.0, 50)
    proxes = [
        lambda z: prox_l1_weighted(z, 0.3, weights),
        lambda z: RegSpec("l2-squared").prox(z, 0.3),
    ]
    for prox in proxes:
        for _ in range(20):
            a = rng.standard_normal(50) + 1j * rng.standard_normal(50)
            b = rng.standard_normal(50) + 1j * rng.standard_normal(50)
            gap = prox(a) - prox(b)
            assert np.real(np.vdot(gap, a - b)) >= np.vdot(gap, gap).real - 1e-12
            assert np.linalg.norm(gap) <= np.linalg.norm(a - b) + 1e-12


def test_prox_tv_rejects_spin(grid4):
    with pytest.raises(UnsupportedSpinError):
        prox_tv(SphMap(grid4, 2, np.zeros(grid4.shape)), 0.1)


def test_regspec_validation():
    with pytest.raises(UnsupportedRegularizerError):
        RegSpec("elastic-net")
    with pytest.raises(UnsupportedRegularizerError):
        RegSpec("tv")


def test_regspec_values_and_homogeneity():
    v = np.array([3.0, -4.0])
    assert RegSpec("weighted-lp").value(v) == pytest.approx(7.0)
    assert RegSpec("weighted-lp", p=2.0).value(v) == pytest.approx(5.0)
    assert RegSpec("l2-squared").value(v) == pytest.approx(25.0)
    assert RegSpec("l2-squared").homogeneity == 2
    assert RegSpec("weighted-lp").homogeneity == 1
    assert RegSpec("weighted-lp").is_l1
    assert not RegSpec("weighted-lp", p=2.0).is_l1


def test_regspec_prox_closed_forms():
    z = np.array([2.0, -1.0])
    assert np.allclose(RegSpec("weighted-lp").prox(z, 0.5), [1.5, -0.5])
    assert np.allclose(RegSpec("l2-squared").prox(z, 0.5), z / 2.0)
    with pytest.raises(UnsupportedRegularizerError):
        RegSpec("weighted-lp", p=2.0).prox(z, 0.5)


def test_regspec_dual_prox_projects():
    v = np.array([3.0, -0.2, 1.0j])
    out = RegSpec("weighted-lp").dual_prox(v, 1.0, 0.5)
    assert np.allclose(out, [0.5, -0.2, 0.5j])
    l2 = RegSpec("l2-squared").dual_prox(np.array([2.0]), 1.0, 0.5)
    assert np.allclose(l2, [1.0])


def test_tv_regspec_matches_tv_norm(grid8, real_map8):
    reg = RegSpec.tv(grid8)
    assert reg.value(real_map8.values) == pytest.approx(tv_norm(real_map8))
