import numpy as np
import pytest

from s2inverse.config import MaskConfig, validate_config
from s2inverse.exceptions import ConfigError
from s2inverse.mapio import write_map
from s2inverse.scenarios import build_mask, noise_level, simulate, streams
from s2inverse.sphere import SphMap


def _config(**overrides):
    raw = {"scenario": "topography", "L": 8, "seed": 7}
    raw.update(overrides)
    return validate_config(raw)


def test_streams_are_deterministic_and_independent():
    first = [g.standard_normal(4) for g in streams(5)]
    second = [g.standard_normal(4) for g in streams(5)]
    for a, b in zip(first, second):
        assert np.array_equal(a, b)
    assert not np.array_equal(first[0], first[1])
    assert not np.array_equal(first[0], streams(6)[0].standard_normal(4))


def test_simulation_is_reproducible():
    a = simulate(_config(mask={"fraction": 0.3}))
    b = simulate(_config(mask={"fraction": 0.3}))
    assert np.array_equal(a.y, b.y)
    assert np.array_equal(a.mask.keep, b.mask.keep)
    c = simulate(_config(seed=8, mask={"fraction": 0.3}))
    assert not np.array_equal(a.y, c.y)


def test_random_mask_removes_exact_count(grid8, rng):
    mask = build_mask(MaskConfig(fraction=0.5), grid8, rng)
    assert mask.M == grid8.size - 60
    full = build_mask(MaskConfig(), grid8, rng)
    assert full.M == grid8.size


def test_band_mask_removes_rings(grid8, rng):
    mask = build_mask(MaskConfig(kind="band", band=(1.0, 2.0)), grid8, rng)
    rings = int(np.sum((grid8.thetas >= 1.0) & (grid8.thetas <= 2.0)))
    assert rings > 0
    assert mask.M == (grid8.n_theta - rings) * grid8.n_phi


def test_file_mask(tmp_path, grid8, rng):
    values = np.ones(grid8.shape)
    values[0] = 0.0
    path = write_map(tmp_path / "mask.s2map", SphMap(grid8, 0, values))
    mask = build_mask(MaskConfig(kind="file", file=str(path)), grid8, rng)
    assert mask.M == grid8.size - grid8.n_phi
    with pytest.raises(ConfigError):
        build_mask(MaskConfig(kind="file", file=str(tmp_path / "missing.s2map")), grid8, rng)


def test_noise_level_matches_snr():
    assert noise_level(np.ones(100), 20.0, False) == pytest.approx(0.1)
    assert noise_level(np.ones(100), 20.0, True) == pytest.approx(0.1 / np.sqrt(2.0))


def test_topography_simulation():
    sim = simulate(_config(mask={"fraction": 0.25}, snr_db=20.0))
    assert sim.M == sim.mask.M == 120 - 30
    assert sim.sigma > 0.0
    assert not sim.complex_data
    assert np.max(np.abs(sim.y.imag)) == 0.0
    observed = sim.observed_map()
    assert np.all(observed.values[~sim.mask.keep] == 0.0)


def test_explicit_sigma_overrides_snr():
    sim = simulate(_config(sigma=0.5))
    assert sim.sigma == 0.5


def test_noiseless_topography_observes_truth():
    sim = simulate(_config(sigma=0.0))
    assert sim.sigma == 0.0
    assert np.allclose(sim.y.real, sim.truth.values.ravel(), atol=1e-10)


def test_camera_truth_is_piecewise_constant():
    sim = simulate(_config(scenario="camera360", regularizer="tv", sigma=0.0))
    levels = np.unique(sim.truth.values)
    assert set(levels) <= {0.0, 1.0, 2.0, 3.0}
    assert sim.M == sim.grid.size


def test_cmb_simulation_uses_whitened_coefficients():
    sim = simulate(_config(scenario="cmb-wiener", mask={"fraction": 0.2}))
    assert sim.dictionary is not None
    assert sim.truth_latent.shape == (64,)
    assert np.allclose(sim.dictionary.apply(sim.truth_latent).real, sim.truth.values)
    assert sim.cl.shape == (8,)


def test_lensing_simulation_is_complex_spin_two():
    sim = simulate(_config(scenario="weak-lensing", mask={"fraction": 0.1}))
    assert sim.complex_data
    assert sim.spin == 2
    assert np.any(sim.y.imag != 0.0)
    assert sim.observed_map().spin == 2
    mean = np.sum(sim.truth.values * sim.grid.pixel_areas)
    assert abs(mean) < 1e-10


def test_observation_file_replaces_simulated_data(tmp_path, grid8):
    values = np.full(grid8.shape, 3.0)
    path = write_map(tmp_path / "obs.s2map", SphMap(grid8, 0, values))
    sim = simulate(_config(observations=str(path), sigma=0.2))
    assert np.allclose(sim.y, 3.0)
    assert sim.sigma == 0.2
