from concurrent.futures import ThreadPoolExecutor

import numpy as np
import pytest

from s2inverse.exceptions import CompositionError, DimensionError, FormatError, InvalidParameterError
from s2inverse.operators import (
    Domain,
    HarmonicScaling,
    MaskSpec,
    bandlimit_operator,
    call_counts,
    camera_operator,
    cmb_operator,
    compose,
    default_power_spectrum,
    dot_test,
    gaussian_beam,
    gradient_norm_bound,
    gradient_operator,
    harmonic_scaling_operator,
    identity,
    inverse_sht_operator,
    lensing_kernel,
    lensing_operator,
    load_power_spectrum,
    mask_adjoint,
    mask_operator,
    operator_norm,
    reset_counts,
    thread_call_tally,
    sht_operator,
    topography_operator,
    wavelet_analysis_operator,
    wavelet_synthesis_operator,
    whitening_dictionary,
    zero_operator,
)
from s2inverse.sphere import FOUR_PI, SphMap, random_coefficients, sht_forward
from s2inverse.wavelets import WaveletParams, build_kernels

DOT_TOL = 1e-10


def _half_mask(grid, seed=3):
    keep = np.zeros(grid.size, dtype=bool)
    keep[np.random.default_rng(seed).permutation(grid.size)[: grid.size // 2]] = True
    return MaskSpec(keep.reshape(grid.shape))


@pytest.mark.parametrize("spin", [0, 2, -2])
def test_transform_adjoints(grid8, spin):
    assert dot_test(sht_operator(grid8, spin)) < DOT_TOL
    assert dot_test(inverse_sht_operator(grid8, spin)) < DOT_TOL


@pytest.mark.parametrize("N", [1, 3])
def test_wavelet_adjoints(grid8, N):
    kernels = build_kernels(WaveletParams(8, 2.0, 0, N))
    assert dot_test(wavelet_analysis_operator(kernels, grid8)) < DOT_TOL
    assert dot_test(wavelet_synthesis_operator(kernels, grid8)) < DOT_TOL


def test_elementary_adjoints(grid8):
    assert dot_test(mask_operator(_half_mask(grid8), grid8)) < DOT_TOL
    assert dot_test(harmonic_scaling_operator(gaussian_beam(0.3, 8))) < DOT_TOL
    assert dot_test(gradient_operator(grid8)) < DOT_TOL
    assert dot_test(bandlimit_operator(grid8)) < DOT_TOL


def test_scenario_operator_adjoints(grid8):
    mask = _half_mask(grid8)
    cl = default_power_spectrum(8)
    assert dot_test(topography_operator(grid8, mask, gaussian_beam(0.2, 8))) < DOT_TOL
    assert dot_test(camera_operator(grid8, gaussian_beam(0.2, 8))) < DOT_TOL
    assert dot_test(cmb_operator(grid8, cl, mask)) < DOT_TOL
    assert dot_test(lensing_operator(grid8, mask)) < DOT_TOL


def test_composition_checks_domains(grid8):
    with pytest.raises(CompositionError) as info:
        compose([sht_operator(grid8), sht_operator(grid8)])
    assert info.value.position == 1
    with pytest.raises(CompositionError):
        compose([])


def test_composition_applies_left_to_right(grid8, real_map8):
    op = compose([sht_operator(grid8), inverse_sht_operator(grid8)])
    assert op.in_domain == Domain.pixel(grid8)
    assert op.out_domain == Domain.pixel(grid8)
    assert np.allclose(op.apply(real_map8.values), real_map8.values, atol=1e-10)


def test_wrong_input_shape(grid8):
    with pytest.raises(DimensionError):
        sht_operator(grid8).apply(np.zeros(10))


def test_call_counts_aggregate_leaves(grid8, real_map8):
    op = compose([sht_operator(grid8), inverse_sht_operator(grid8)])
    op.apply(real_map8.values)
    op.adjoint(real_map8.values)
    op.apply(real_map8.values)
    assert call_counts(op) == {"Y.apply": 2, "Y.adjoint": 1, "Y^-1.apply": 2, "Y^-1.adjoint": 1}
    reset_counts(op)
    assert call_counts(op) == {}


def test_adjoint_property_swaps_domains(grid8):
    op = mask_operator(_half_mask(grid8), grid8)
    assert op.H.in_domain == op.out_domain
    assert op.H.out_domain == op.in_domain


def test_operator_norm_of_diagonal():
    values = np.array([0.5, 2.0, 1.0, 0.25])
    op = harmonic_scaling_operator(HarmonicScaling(values))
    assert operator_norm(op, max_iter=500, tol=1e-12) == pytest.approx(2.0, rel=1e-6)
    assert operator_norm(identity(Domain.vector(7))) == pytest.approx(1.0)


def test_mask_adjoint_zero_fills(grid8):
    mask = _half_mask(grid8)
    y = np.arange(mask.M, dtype=np.float64) + 1.0
    filled = mask_adjoint(y, mask, grid8).values
    assert np.all(filled[~mask.keep] == 0.0)
    assert np.array_equal(filled[mask.keep], y)
    assert mask.M == grid8.size // 2


def test_mask_rejects_non_boolean(grid8):
    with pytest.raises(DimensionError):
        MaskSpec(np.ones(grid8.shape))


def test_gaussian_beam():
    beam = gaussian_beam(0.1, 16)
    assert beam.values[0] == 1.0
    assert np.all(np.diff(beam.values) < 0.0)
    with pytest.raises(InvalidParameterError):
        gaussian_beam(0.0, 16)


def test_lensing_kernel_values():
    kernel = lensing_kernel(8)
    assert kernel.values[0] == 0.0
    assert kernel.values[1] == 0.0
    assert kernel.values[2] == pytest.approx(np.sqrt(4.0 / 6.0))
    with pytest.raises(InvalidParameterError):
        lensing_kernel(2)


def test_lensing_operator_output_is_spin_two(grid8):
    op = lensing_operator(grid8)
    assert op.out_domain.spin == 2
    assert op.in_domain.spin == 0


def test_default_power_spectrum_has_unit_variance():
    cl = default_power_spectrum(16)
    ells = np.arange(16)
    assert np.sum((2 * ells + 1) * cl) / FOUR_PI == pytest.approx(1.0)


def test_whitening_dictionary_domains(grid8):
    op = whitening_dictionary(grid8, default_power_spectrum(8))
    assert op.in_domain == Domain.harmonic(8)
    assert op.out_domain == Domain.pixel(grid8)


def test_load_power_spectrum(tmp_path):
    path = tmp_path / "cl.txt"
    path.write_text("\n".join(f"{ell} {1.0 / (ell + 1)}" for ell in range(10)))
    cl = load_power_spectrum(path, 8)
    assert cl.shape == (8,)
    assert cl[3] == pytest.approx(0.25)


@pytest.mark.parametrize(
    "text",
    [
        "0 1.0\n2 0.5\n",
        "0 1.0 3.0\n1 0.5 2.0\n",
        "0 1.0\n1 -0.5\n2 0.1\n3 0.1\n",
        "0 1.0\n1 0.5\n",
    ],
)
def test_load_power_spectrum_rejects_bad_tables(tmp_path, text):
    path = tmp_path / "cl.txt"
    path.write_text(text)
    with pytest.raises(FormatError):
        load_power_spectrum(path, 4)


def test_gradient_bound_dominates_power_iteration(grid8):
    estimate = operator_norm(gradient_operator(grid8), max_iter=300)
    assert estimate ** 2 <= gradient_norm_bound(grid8)


def test_zero_operator_passes_dot_test(grid8):
    assert dot_test(zero_operator(Domain.pixel(grid8), Domain.vector(5))) == 0.0


def test_mask_projection_is_idempotent(grid8, rng):
    op = mask_operator(_half_mask(grid8), grid8)
    x = rng.standard_normal(grid8.shape) + 1j * rng.standard_normal(grid8.shape)
    projected = op.adjoint(op.apply(x))
    assert np.array_equal(op.adjoint(op.apply(projected)), projected)
    y = rng.standard_normal(op.out_domain.shape)
    assert np.array_equal(op.apply(op.adjoint(y)), y)


def test_whitened_cmb_field_has_unit_mean_power(grid8, rng):
    op = cmb_operator(grid8, default_power_spectrum(8))
    powers = []
    for _ in range(1000):
        field = op.apply(random_coefficients(8, 0, rng, real=True).coeffs).reshape(grid8.shape)
        coeffs = sht_forward(SphMap(grid8, 0, field)).coeffs
        powers.append(np.sum(np.abs(coeffs) ** 2) / FOUR_PI)
    assert np.mean(powers) == pytest.approx(1.0, rel=0.05)


def test_call_counters_are_thread_safe(grid8):
    op = identity(Domain.pixel(grid8))
    x = np.zeros(grid8.shape)

    def work(_):
        with thread_call_tally() as tally:
            for _ in range(200):
                op.apply(x)
        return tally["I.apply"]

    with ThreadPoolExecutor(max_workers=8) as pool:
        own = list(pool.map(work, range(8)))
    assert own == [200] * 8
    assert call_counts(op) == {"I.apply": 1600}
