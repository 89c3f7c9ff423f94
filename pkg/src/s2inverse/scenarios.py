"""Synthetic experiments: ground truth, mask, forward model and noisy observations."""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Optional, Tuple

import numpy as np

from .config import ExperimentConfig, MaskConfig
from .exceptions import ConfigError, FormatError
from .mapio import read_map
from .operators import (
    LinearOperator,
    MaskSpec,
    bandlimit_operator,
    camera_operator,
    compose,
    default_power_spectrum,
    gaussian_beam,
    lensing_operator,
    load_power_spectrum,
    mask_adjoint,
    mask_operator,
    topography_operator,
    whitening_dictionary,
)
from .sphere import HarmonicCoeffs, SphGrid, SphMap, ell_m_indices, make_grid, random_coefficients, sht_inverse

logger = logging.getLogger(__name__)

N_FEATURES = 3
CAMERA_BANDS = 4
CAMERA_SECTORS = 6


@dataclass(frozen=True, eq=False)
class Simulation:
    grid: SphGrid
    truth: SphMap
    y: np.ndarray
    sigma: float
    phi: LinearOperator
    mask: MaskSpec
    complex_data: bool = False
    spin: int = 0
    dictionary: Optional[LinearOperator] = None
    truth_latent: Optional[np.ndarray] = None
    cl: Optional[np.ndarray] = None

    @property
    def M(self) -> int:
        return self.y.size

    def observed_map(self) -> SphMap:
        """Observations zero-filled back onto the grid."""
        values = mask_adjoint(self.y, self.mask, self.grid, self.spin).values
        if not self.complex_data:
            values = values.real
        return SphMap(self.grid, self.spin, values)


def streams(seed: int) -> Tuple[np.random.Generator, np.random.Generator, np.random.Generator]:
    """Independent truth, mask and noise generators from one seed."""
    children = np.random.SeedSequence(seed).spawn(3)
    return tuple(np.random.Generator(np.random.PCG64(child)) for child in children)


def _red_field(grid: SphGrid, rng: np.random.Generator, slope: float = 2.0) -> np.ndarray:
    ells, _ = ell_m_indices(grid.L)
    coeffs = random_coefficients(grid.L, 0, rng, real=True).coeffs * (ells + 1.0) ** (-slope / 2.0)
    coeffs[0] = 0.0
    values = sht_inverse(HarmonicCoeffs(grid.L, 0, coeffs), grid).values.real
    scale = values.std()
    return values / scale if scale > 0.0 else values


def _directions(thetas: np.ndarray, phis: np.ndarray) -> np.ndarray:
    return np.stack([np.sin(thetas) * np.cos(phis), np.sin(thetas) * np.sin(phis), np.cos(thetas)], axis=-1)


def _point_features(grid: SphGrid, rng: np.random.Generator, count: int) -> np.ndarray:
    theta_grid, phi_grid = np.meshgrid(grid.thetas, grid.phis, indexing="ij")
    pixels = _directions(theta_grid, phi_grid)
    width = 2.0 * np.pi / grid.L
    out = np.zeros(grid.shape)
    for _ in range(count):
        centre = _directions(rng.uniform(0.3, np.pi - 0.3), rng.uniform(0.0, 2.0 * np.pi))
        distance = np.arccos(np.clip(pixels @ centre, -1.0, 1.0))
        out += rng.uniform(1.0, 2.0) * np.exp(-0.5 * (distance / width) ** 2)
    return out


def _bandlimited(grid: SphGrid, values: np.ndarray) -> np.ndarray:
    return bandlimit_operator(grid).apply(values.astype(np.complex128)).real


def topography_truth(grid: SphGrid, rng: np.random.Generator) -> np.ndarray:
    """Red-spectrum relief plus a few localised peaks, band-limited."""
    return _bandlimited(grid, _red_field(grid, rng) + _point_features(grid, rng, N_FEATURES))


def camera_truth(grid: SphGrid, rng: np.random.Generator) -> np.ndarray:
    """Piecewise-constant tiling of latitude bands and longitude sectors."""
    levels = rng.integers(0, 4, size=(CAMERA_BANDS, CAMERA_SECTORS)).astype(np.float64)
    bands = (np.arange(grid.n_theta) * CAMERA_BANDS) // grid.n_theta
    sectors = (np.arange(grid.n_phi) * CAMERA_SECTORS) // grid.n_phi
    return levels[bands[:, None], sectors[None, :]]


def lensing_truth(grid: SphGrid, rng: np.random.Generator) -> np.ndarray:
    """Lognormal convergence, band-limited, monopole removed."""
    field = _bandlimited(grid, np.exp(0.5 * _red_field(grid, rng)))
    mean = np.sum(field * grid.pixel_areas) / np.sum(grid.pixel_areas)
    return field - mean


def build_mask(spec: MaskConfig, grid: SphGrid, rng: np.random.Generator) -> MaskSpec:
    keep = np.ones(grid.shape, dtype=bool)
    if spec.kind == "file":
        try:
            stored = read_map(spec.file)
        except FormatError as exc:
            raise ConfigError(f"mask.file: {exc}") from exc
        if not isinstance(stored, SphMap) or stored.grid.shape != grid.shape:
            raise ConfigError(f"mask.file '{spec.file}' does not hold a pixel map on the L={grid.L} grid.")
        keep &= stored.values != 0
    elif spec.kind == "band":
        low, high = spec.band
        rings = (grid.thetas >= low) & (grid.thetas <= high)
        keep[rings, :] = False
    if spec.fraction > 0.0:
        removed = int(round(spec.fraction * grid.size))
        drop = rng.choice(grid.size, size=removed, replace=False)
        flat = keep.reshape(-1)
        flat[drop] = False
    if not keep.any():
        raise ConfigError("The mask removes every pixel.")
    return MaskSpec(keep)


def noise_level(y_clean: np.ndarray, snr_db: float, complex_data: bool) -> float:
    """sigma with 20 log10(||y|| / E||n||) = snr_db; complex noise has two components per entry."""
    dof = y_clean.size * (2 if complex_data else 1)
    return float(np.linalg.norm(y_clean) / np.sqrt(dof) * 10.0 ** (-snr_db / 20.0))


def _observations(
    cfg: ExperimentConfig,
    y_clean: np.ndarray,
    complex_data: bool,
    mask: MaskSpec,
    rng: np.random.Generator,
) -> Tuple[np.ndarray, float]:
    if cfg.observations is not None:
        try:
            observed = read_map(cfg.observations)
        except FormatError as exc:
            raise ConfigError(f"observations: {exc}") from exc
        if not isinstance(observed, SphMap) or observed.values.shape != mask.keep.shape:
            raise ConfigError(f"observations '{cfg.observations}' does not match the configured grid.")
        y = observed.values[mask.keep].astype(np.complex128)
    else:
        y = y_clean if complex_data else y_clean.real.astype(np.complex128)

    if cfg.sigma is not None:
        sigma = cfg.sigma
    elif cfg.snr_db is not None:
        sigma = noise_level(y_clean, cfg.snr_db, complex_data)
    else:
        sigma = 0.0
    if sigma > 0.0 and cfg.observations is None:
        noise = rng.standard_normal(y.shape)
        if complex_data:
            noise = noise + 1j * rng.standard_normal(y.shape)
        y = y + sigma * noise
    logger.info("observations: M=%d, sigma=%.4g", y.size, sigma)
    return y, sigma


def simulate(cfg: ExperimentConfig) -> Simulation:
    """Mock observations y = Phi x + n of a seeded ground truth."""
    grid = make_grid(cfg.L)
    truth_rng, mask_rng, noise_rng = streams(cfg.seed)
    beam = gaussian_beam(cfg.beam_fwhm, grid.L) if cfg.beam_fwhm is not None else None
    dictionary = None
    truth_latent = None
    cl = None
    complex_data = False
    spin = 0

    if cfg.scenario == "topography":
        mask = build_mask(cfg.mask, grid, mask_rng)
        phi = topography_operator(grid, mask, beam)
        truth = topography_truth(grid, truth_rng)
        y_clean = phi.apply(truth.astype(np.complex128))
    elif cfg.scenario == "camera360":
        if cfg.mask.kind != "random" or cfg.mask.fraction > 0.0:
            logger.warning("camera360 observes the full sphere; ignoring the mask configuration")
        mask = MaskSpec.full(grid)
        # the blurred map itself is the data; D = I exposes it as a measurement vector
        phi = compose([camera_operator(grid, beam), mask_operator(mask, grid)])
        truth = camera_truth(grid, truth_rng)
        y_clean = phi.apply(truth.astype(np.complex128))
    elif cfg.scenario == "cmb-wiener":
        mask = build_mask(cfg.mask, grid, mask_rng)
        cl = load_power_spectrum(cfg.cl_file, grid.L) if cfg.cl_file else default_power_spectrum(grid.L)
        dictionary = whitening_dictionary(grid, cl)
        phi = mask_operator(mask, grid)
        truth_latent = random_coefficients(grid.L, 0, truth_rng, real=True).coeffs
        truth = dictionary.apply(truth_latent).real
        y_clean = phi.apply(truth.astype(np.complex128))
    elif cfg.scenario == "weak-lensing":
        mask = build_mask(cfg.mask, grid, mask_rng)
        phi = lensing_operator(grid, mask)
        truth = lensing_truth(grid, truth_rng)
        y_clean = phi.apply(truth.astype(np.complex128))
        complex_data = True
        spin = 2
    else:
        raise ConfigError(f"Unknown scenario '{cfg.scenario}'.")

    y, sigma = _observations(cfg, y_clean, complex_data, mask, noise_rng)
    return Simulation(
        grid=grid,
        truth=SphMap(grid, 0, truth),
        y=y,
        sigma=sigma,
        phi=phi,
        mask=mask,
        complex_data=complex_data,
        spin=spin,
        dictionary=dictionary,
        truth_latent=truth_latent,
        cl=cl,
    )

