"""Sampling grids, Wigner-d recursions and exact spin spherical harmonic transforms.

Harmonic convention (Condon-Shortley phase)::

    sY_lm(theta, phi) = (-1)^s sqrt((2l+1)/4pi) d^l_{m,-s}(theta) e^{i m phi}

Coefficients are stored flat with index ``l*l + l + m``. Grids use Gauss-Legendre
colatitude nodes (``n_theta = L``) and ``n_phi = 2L - 1`` uniform longitudes, which
makes the forward transform exact for every spin ``|s| < L``.
"""

from __future__ import annotations

import dataclasses
import logging
from dataclasses import dataclass
from functools import lru_cache
from typing import Optional, Tuple, Union

import numpy as np
from scipy.special import gammaln

from .exceptions import (
    DimensionError,
    InvalidBandlimitError,
    InvalidParameterError,
    SpinExceedsBandlimitError,
)

logger = logging.getLogger(__name__)

FOUR_PI = 4.0 * np.pi


@dataclass(frozen=True, eq=False)
class SphGrid:
    L: int
    thetas: np.ndarray
    phis: np.ndarray
    quad_weights: np.ndarray
    pixel_areas: np.ndarray

    def __post_init__(self) -> None:
        if self.thetas.ndim != 1 or self.phis.ndim != 1:
            raise DimensionError("Grid nodes must be one-dimensional arrays.")
        if self.quad_weights.shape != self.thetas.shape:
            raise DimensionError("quad_weights must hold one weight per ring.")
        if self.pixel_areas.shape != self.shape:
            raise DimensionError(f"pixel_areas must have shape {self.shape}.")
        if self.n_phi < 2 * self.L - 1:
            raise DimensionError(f"Grid needs at least {2 * self.L - 1} longitudes for L={self.L}.")

    @property
    def n_theta(self) -> int:
        return self.thetas.size

    @property
    def n_phi(self) -> int:
        return self.phis.size

    @property
    def shape(self) -> Tuple[int, int]:
        return (self.n_theta, self.n_phi)

    @property
    def size(self) -> int:
        return self.n_theta * self.n_phi

    @property
    def delta_phi(self) -> float:
        return 2.0 * np.pi / self.n_phi

    def with_weights(self, quad_weights: np.ndarray) -> "SphGrid":
        weights = np.asarray(quad_weights, dtype=np.float64)
        return dataclasses.replace(self, quad_weights=np.broadcast_to(weights, self.thetas.shape).copy())

    def same_sampling(self, other: "SphGrid") -> bool:
        return self.L == other.L and self.shape == other.shape


@dataclass(frozen=True, eq=False)
class SphMap:
    grid: SphGrid
    spin: int
    values: np.ndarray

    def __post_init__(self) -> None:
        if self.values.shape != self.grid.shape:
            raise DimensionError(
                f"Map values have shape {self.values.shape}, grid expects {self.grid.shape}."
            )


@dataclass(frozen=True, eq=False)
class HarmonicCoeffs:
    L: int
    spin: int
    coeffs: np.ndarray

    def __post_init__(self) -> None:
        if self.coeffs.shape != (self.L * self.L,):
            raise DimensionError(
                f"Expected {self.L * self.L} coefficients for L={self.L}, got shape {self.coeffs.shape}."
            )


@dataclass(frozen=True)
class EulerAngles:
    alpha: float = 0.0
    beta: float = 0.0
    gamma: float = 0.0

    def __post_init__(self) -> None:
        two_pi = 2.0 * np.pi
        if not 0.0 <= self.alpha < two_pi:
            raise InvalidParameterError(f"alpha must lie in [0, 2pi) (got {self.alpha}).")
        if not 0.0 <= self.beta <= np.pi:
            raise InvalidParameterError(f"beta must lie in [0, pi] (got {self.beta}).")
        if not 0.0 <= self.gamma < two_pi:
            raise InvalidParameterError(f"gamma must lie in [0, 2pi) (got {self.gamma}).")


def elm2ind(ell: int, m: int) -> int:
    return ell * ell + ell + m


@lru_cache(maxsize=None)
def ell_m_indices(L: int) -> Tuple[np.ndarray, np.ndarray]:
    """Degree and order of every flat coefficient index."""
    ells = np.repeat(np.arange(L), 2 * np.arange(L) + 1)
    ms = np.arange(L * L) - ells * ells - ells
    ells.setflags(write=False)
    ms.setflags(write=False)
    return ells, ms


def _check_bandlimit(L: int) -> None:
    if not isinstance(L, (int, np.integer)) or L < 1:
        raise InvalidBandlimitError(L)


def _check_spin(spin: int, L: int) -> None:
    if abs(spin) >= L:
        raise SpinExceedsBandlimitError(spin, L)


def make_grid(L: int) -> SphGrid:
    """Gauss-Legendre grid with exact quadrature for band-limit ``L``."""
    _check_bandlimit(L)
    L = int(L)
    nodes, gl_weights = np.polynomial.legendre.leggauss(L)
    # leggauss returns ascending cos(theta); flip so theta increases
    thetas = np.arccos(nodes[::-1])
    gl_weights = gl_weights[::-1]
    n_phi = 2 * L - 1
    phis = 2.0 * np.pi * np.arange(n_phi) / n_phi
    delta_phi = 2.0 * np.pi / n_phi

    bounds = np.concatenate(([0.0], 0.5 * (thetas[1:] + thetas[:-1]), [np.pi]))
    ring_areas = delta_phi * (np.cos(bounds[:-1]) - np.cos(bounds[1:]))
    pixel_areas = np.repeat(ring_areas[:, None], n_phi, axis=1)

    return SphGrid(
        L=L,
        thetas=thetas,
        phis=phis,
        quad_weights=gl_weights * delta_phi,
        pixel_areas=pixel_areas,
    )


def _wigner_seed(j: int, m: int, n: int, half_cos: np.ndarray, half_sin: np.ndarray) -> np.ndarray:
    """d^j_{mn} at the starting degree j = max(|m|, |n|)."""
    sign = 1.0
    if abs(n) > abs(m):
        sign = (-1.0) ** (m - n)
        m, n = n, m
    if m < 0:
        sign *= (-1.0) ** (n + j)
        n = -n
    log_norm = 0.5 * (gammaln(2 * j + 1) - gammaln(j + n + 1) - gammaln(j - n + 1))
    return sign * (-1.0) ** (j - n) * np.exp(log_norm) * half_cos ** (j + n) * half_sin ** (j - n)


def _wigner_d_column(L: int, n: int, betas: np.ndarray) -> np.ndarray:
    """d^l_{mn}(beta) for fixed n, all l < L and |m| < L.

    Returns an array indexed ``[beta, l, m + L - 1]``. Entries with ``|m| > l`` or
    ``|n| > l`` are zero.
    """
    betas = np.atleast_1d(np.asarray(betas, dtype=np.float64))
    ms = np.arange(-(L - 1), L)
    table = np.zeros((betas.size, L, ms.size))
    if abs(n) >= L:
        return table

    cos_b = np.cos(betas)[None, :]
    half_cos = np.cos(0.5 * betas)
    half_sin = np.sin(0.5 * betas)
    start = np.maximum(np.abs(ms), abs(n))
    m_col = ms.astype(np.float64)[:, None]
    nf = float(n)

    prev = np.zeros((ms.size, betas.size))
    prev2 = np.zeros_like(prev)
    for ell in range(abs(n), L):
        cur = np.zeros_like(prev)
        active = start < ell
        if np.any(active):
            m = m_col[active]
            lead = ell * (2 * ell - 1) / np.sqrt((ell * ell - m * m) * (ell * ell - nf * nf))
            if ell > 1:
                centre = m * nf / (ell * (ell - 1))
                tail = np.sqrt(((ell - 1) ** 2 - m * m) * ((ell - 1) ** 2 - nf * nf)) / (
                    (ell - 1) * (2 * ell - 1)
                )
            else:
                centre = np.zeros_like(m)
                tail = np.zeros_like(m)
            cur[active] = lead * ((cos_b - centre) * prev[active] - tail * prev2[active])
        for idx in np.flatnonzero(start == ell):
            cur[idx] = _wigner_seed(ell, int(ms[idx]), n, half_cos, half_sin)
        table[:, ell, :] = cur.T
        prev2, prev = prev, cur
    return table


def wigner_d_table(L: int, beta: float) -> np.ndarray:
    """All d^l_{mn}(beta) for l < L, indexed ``[l, m + L - 1, n + L - 1]``."""
    _check_bandlimit(L)
    columns = [_wigner_d_column(L, n, np.array([beta]))[0] for n in range(-(L - 1), L)]
    return np.stack(columns, axis=-1)


def wigner_d(ell: int, beta: float) -> np.ndarray:
    """The (2l+1) x (2l+1) Wigner small-d matrix with rows m and columns n from -l to l."""
    if ell < 0:
        raise InvalidParameterError(f"Degree must be non-negative (got {ell}).")
    if not 0.0 <= beta <= np.pi:
        raise InvalidParameterError(f"beta must lie in [0, pi] (got {beta}).")
    return wigner_d_table(ell + 1, beta)[ell]


@lru_cache(maxsize=64)
def _cached_kernel(L: int, spin: int, thetas: Tuple[float, ...]) -> np.ndarray:
    logger.debug("Building spin-%d transform kernel for L=%d", spin, L)
    d = _wigner_d_column(L, -spin, np.asarray(thetas))
    ells = np.arange(L)
    kernel = (-1.0) ** spin * np.sqrt((2 * ells + 1) / FOUR_PI)[None, :, None] * d
    kernel.setflags(write=False)
    return kernel


def spin_kernel(grid: SphGrid, spin: int) -> np.ndarray:
    """(-1)^s sqrt((2l+1)/4pi) d^l_{m,-s}(theta_t), indexed ``[t, l, m + L - 1]``."""
    _check_spin(spin, grid.L)
    return _cached_kernel(grid.L, int(spin), tuple(float(t) for t in grid.thetas))


def _flat_to_table(coeffs: np.ndarray, L: int) -> np.ndarray:
    ells, ms = ell_m_indices(L)
    table = np.zeros((L, 2 * L - 1), dtype=np.complex128)
    table[ells, ms + L - 1] = coeffs
    return table


def _table_to_flat(table: np.ndarray, L: int) -> np.ndarray:
    ells, ms = ell_m_indices(L)
    return table[ells, ms + L - 1]


def _phi_columns(grid: SphGrid) -> np.ndarray:
    return np.arange(-(grid.L - 1), grid.L) % grid.n_phi


def _analyse(values: np.ndarray, grid: SphGrid, spin: int, ring_weights: Optional[np.ndarray]) -> np.ndarray:
    kernel = spin_kernel(grid, spin)
    fourier = np.fft.fft(values, axis=1)[:, _phi_columns(grid)]
    if ring_weights is not None:
        fourier = fourier * ring_weights[:, None]
    table = np.einsum("tlm,tm->lm", kernel, fourier)
    return _table_to_flat(table, grid.L)


def _synthesise(coeffs: np.ndarray, grid: SphGrid, spin: int) -> np.ndarray:
    kernel = spin_kernel(grid, spin)
    rings = np.einsum("tlm,lm->tm", kernel, _flat_to_table(coeffs, grid.L))
    spectrum = np.zeros(grid.shape, dtype=np.complex128)
    spectrum[:, _phi_columns(grid)] = rings
    return np.fft.ifft(spectrum, axis=1) * grid.n_phi


def _check_match(L: int, grid: SphGrid) -> None:
    if L != grid.L:
        raise DimensionError(f"Coefficients are band-limited at L={L} but the grid has L={grid.L}.")


def sht_forward(sph_map: SphMap) -> HarmonicCoeffs:
    """Forward transform Y: quadrature-weighted projection onto sY_lm."""
    grid = sph_map.grid
    _check_spin(sph_map.spin, grid.L)
    coeffs = _analyse(sph_map.values, grid, sph_map.spin, grid.quad_weights)
    return HarmonicCoeffs(grid.L, sph_map.spin, coeffs)


def sht_inverse(coeffs: HarmonicCoeffs, grid: SphGrid) -> SphMap:
    """Inverse transform Y^-1: pointwise synthesis of the harmonic expansion."""
    _check_match(coeffs.L, grid)
    _check_spin(coeffs.spin, grid.L)
    return SphMap(grid, coeffs.spin, _synthesise(coeffs.coeffs, grid, coeffs.spin))


def sht_forward_adjoint(coeffs: HarmonicCoeffs, grid: SphGrid) -> SphMap:
    """Adjoint of Y: ring weight times the inverse transform."""
    _check_match(coeffs.L, grid)
    _check_spin(coeffs.spin, grid.L)
    values = _synthesise(coeffs.coeffs, grid, coeffs.spin) * grid.quad_weights[:, None]
    return SphMap(grid, coeffs.spin, values)


def sht_inverse_adjoint(sph_map: SphMap) -> HarmonicCoeffs:
    """Adjoint of Y^-1: unweighted projection, which differs from Y on sampled grids."""
    grid = sph_map.grid
    _check_spin(sph_map.spin, grid.L)
    coeffs = _analyse(sph_map.values, grid, sph_map.spin, None)
    return HarmonicCoeffs(grid.L, sph_map.spin, coeffs)


def rotate(coeffs: HarmonicCoeffs, rho: EulerAngles) -> HarmonicCoeffs:
    """Rotate a band-limited signal by Euler angles (zyz convention).

    f'_lm = sum_n e^{-i m alpha} d^l_{mn}(beta) e^{-i n gamma} f_ln
    """
    L = coeffs.L
    orders = np.arange(-(L - 1), L)
    d = wigner_d_table(L, rho.beta)
    table = _flat_to_table(coeffs.coeffs, L) * np.exp(-1j * orders * rho.gamma)[None, :]
    rotated = np.einsum("lmn,ln->lm", d, table) * np.exp(-1j * orders * rho.alpha)[None, :]
    return HarmonicCoeffs(L, coeffs.spin, _table_to_flat(rotated, L))


def random_coefficients(
    L: int,
    spin: int = 0,
    rng: Optional[np.random.Generator] = None,
    real: bool = False,
) -> HarmonicCoeffs:
    """Unit-variance band-limited coefficients, zero below |spin|.

    With ``real=True`` (spin 0 only) the coefficients obey f*_lm = (-1)^m f_l,-m.
    """
    _check_bandlimit(L)
    _check_spin(spin, L)
    rng = rng if rng is not None else np.random.default_rng()
    ells, ms = ell_m_indices(L)
    coeffs = (rng.standard_normal(L * L) + 1j * rng.standard_normal(L * L)) / np.sqrt(2.0)
    coeffs[ells < abs(spin)] = 0.0
    if real:
        if spin != 0:
            raise InvalidParameterError("Real-field coefficients are only defined for spin 0.")
        zonal = ms == 0
        coeffs[zonal] = rng.standard_normal(int(zonal.sum()))
        negative = np.flatnonzero(ms < 0)
        mirror = ells[negative] * ells[negative] + ells[negative] - ms[negative]
        coeffs[negative] = (-1.0) ** ms[negative] * np.conj(coeffs[mirror])
    return HarmonicCoeffs(L, spin, coeffs)


def as_values(x: Union[SphMap, np.ndarray]) -> np.ndarray:
    return x.values if isinstance(x, SphMap) else np.asarray(x)
