"""Scale-discretised directional wavelets on the sphere (spin-0 dictionaries).

Harmonic tiling: kappa_j(l) = sqrt(k(l / lam^(j+1)) - k(l / lam^j)) for scales
J0 <= j <= J, scaling function Phi(l) = sqrt(k(l / lam^J0)), where k is the smooth
decreasing cut-off built from the bump exp(-1/(1 - t^2)). The tiles telescope, so
Phi(l)^2 + sum_j kappa_j(l)^2 = 1.

Directional weights (N > 1) use the band-limited binomial profile
s_ln = sqrt(C(g, (g - n)/2) / 2^g) over orders n = -g, -g+2, ..., g with
g = the largest integer <= min(N - 1, l) of the same parity as N - 1, so that
sum_n s_ln^2 = 1 for every l. Orientations are gamma_k = k pi / N.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from typing import Tuple

import numpy as np
from scipy.integrate import quad
from scipy.special import comb

from .exceptions import (
    DimensionError,
    InvalidDilationError,
    InvalidParameterError,
    UnsupportedSpinError,
)
from .sphere import (
    FOUR_PI,
    HarmonicCoeffs,
    SphGrid,
    SphMap,
    ell_m_indices,
    sht_forward,
    sht_forward_adjoint,
    sht_inverse,
    sht_inverse_adjoint,
)

logger = logging.getLogger(__name__)


def max_scale(L: int, dilation: float) -> int:
    if L <= 2:
        return 0
    return int(math.ceil(math.log(L - 1) / math.log(dilation) - 1e-12))


@dataclass(frozen=True)
class WaveletParams:
    L: int
    dilation: float = 2.0
    J0: int = 0
    N: int = 1

    def __post_init__(self) -> None:
        if self.L < 1:
            raise InvalidParameterError(f"Wavelet band-limit must be >= 1 (got {self.L}).")
        if not self.dilation > 1.0:
            raise InvalidDilationError(f"Dilation must be > 1 (got {self.dilation}).")
        if self.J0 < 0:
            raise InvalidParameterError(f"J0 must be >= 0 (got {self.J0}).")
        if self.J0 > self.J:
            raise InvalidParameterError(
                f"J0={self.J0} exceeds the largest scale J={self.J} for L={self.L}, dilation={self.dilation}."
            )
        if not 1 <= self.N <= self.L:
            raise InvalidParameterError(f"Number of directions must lie in [1, L] (got N={self.N}).")

    @property
    def J(self) -> int:
        return max_scale(self.L, self.dilation)

    @property
    def n_scales(self) -> int:
        return self.J - self.J0 + 1


@dataclass(frozen=True, eq=False)
class WaveletKernels:
    params: WaveletParams
    scaling_ell: np.ndarray
    wav_ell: np.ndarray
    directionality: np.ndarray
    orders: np.ndarray
    gammas: np.ndarray

    @property
    def L(self) -> int:
        return self.params.L

    @property
    def N(self) -> int:
        return self.params.N

    @property
    def n_scales(self) -> int:
        return self.wav_ell.shape[0]

    @property
    def n_slices(self) -> int:
        return 1 + self.n_scales * self.N

    def phases(self) -> np.ndarray:
        """exp(i n gamma_k) indexed [k, order]."""
        return np.exp(1j * np.outer(self.gammas, self.orders))

    def multipliers(self) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Flat per-(l, m) multipliers: scaling, analysis[j, order], synthesis[j, order]."""
        ells, _ = ell_m_indices(self.L)
        base = (
            self.wav_ell[:, None, ells]
            * self.directionality[ells].T[None, :, :]
            * ((-1.0) ** self.orders)[None, :, None]
        )
        norm = np.sqrt(FOUR_PI / (2 * ells + 1))
        return self.scaling_ell[ells], base * norm, base / norm


def _bump(x: float) -> float:
    if abs(x) >= 1.0:
        return 0.0
    return math.exp(-1.0 / (1.0 - x * x))


def _tile_integrand(t: float, dilation: float) -> float:
    return _bump(2.0 * dilation / (dilation - 1.0) * (t - 1.0 / dilation) - 1.0) / t


def _cutoff(ts: np.ndarray, dilation: float) -> np.ndarray:
    """Smooth decreasing cut-off: 1 for t <= 1/dilation, 0 for t >= 1."""
    lower = 1.0 / dilation
    norm, _ = quad(_tile_integrand, lower, 1.0, args=(dilation,), epsabs=1e-15, limit=200)
    out = np.empty(ts.shape)
    for idx, t in np.ndenumerate(ts):
        if t <= lower:
            out[idx] = 1.0
        elif t >= 1.0:
            out[idx] = 0.0
        else:
            value, _ = quad(_tile_integrand, t, 1.0, args=(dilation,), epsabs=1e-15, limit=200)
            out[idx] = value / norm
    return out


def _directional_weights(L: int, N: int) -> Tuple[np.ndarray, np.ndarray]:
    orders = np.arange(-(N - 1), N, 2)
    weights = np.zeros((L, orders.size))
    for ell in range(L):
        band = min(N - 1, ell)
        if (N - 1 - band) % 2:
            band -= 1
        if band < 0:
            continue
        for col, n in enumerate(orders):
            if abs(n) <= band:
                weights[ell, col] = math.sqrt(comb(band, int(band - n) // 2, exact=True) / 2.0 ** band)
    return weights, orders


def build_kernels(params: WaveletParams) -> WaveletKernels:
    L, lam = params.L, params.dilation
    ells = np.arange(L, dtype=np.float64)
    cut = {j: _cutoff(ells / lam ** j, lam) for j in range(params.J0, params.J + 2)}
    scaling_ell = np.sqrt(cut[params.J0])
    wav_ell = np.stack(
        [np.sqrt(np.clip(cut[j + 1] - cut[j], 0.0, None)) for j in range(params.J0, params.J + 1)]
    )
    directionality, orders = _directional_weights(L, params.N)
    gammas = np.pi * np.arange(params.N) / params.N
    logger.debug("Built %d wavelet scales for L=%d, dilation=%g, N=%d", wav_ell.shape[0], L, lam, params.N)
    return WaveletKernels(params, scaling_ell, wav_ell, directionality, orders, gammas)


def check_admissibility(kernels: WaveletKernels) -> float:
    directional_energy = np.sum(kernels.directionality ** 2, axis=1)
    total = kernels.scaling_ell ** 2 + np.sum(kernels.wav_ell ** 2, axis=0) * directional_energy
    return float(np.max(np.abs(1.0 - total)))


@dataclass(frozen=True, eq=False)
class WaveletCoeffs:
    grid: SphGrid
    scaling: SphMap
    scales: np.ndarray

    def __post_init__(self) -> None:
        if not self.scaling.grid.same_sampling(self.grid):
            raise DimensionError("Scaling map lives on a different grid.")
        if self.scales.ndim != 4 or self.scales.shape[2:] != self.grid.shape:
            raise DimensionError(
                f"Wavelet slices must have shape (n_scales, N, {self.grid.n_theta}, {self.grid.n_phi})."
            )

    def slice_map(self, scale: int, direction: int) -> SphMap:
        return SphMap(self.grid, 0, self.scales[scale, direction])

    def to_array(self) -> np.ndarray:
        return np.concatenate([self.scaling.values[None], self.scales.reshape((-1,) + self.grid.shape)])

    @classmethod
    def from_array(cls, grid: SphGrid, stacked: np.ndarray, kernels: WaveletKernels) -> "WaveletCoeffs":
        expected = (kernels.n_slices,) + grid.shape
        if stacked.shape != expected:
            raise DimensionError(f"Stacked wavelet array has shape {stacked.shape}, expected {expected}.")
        scales = stacked[1:].reshape((kernels.n_scales, kernels.N) + grid.shape)
        return cls(grid, SphMap(grid, 0, stacked[0]), scales)


def _check_map(sph_map: SphMap, kernels: WaveletKernels, operation: str) -> None:
    if sph_map.spin != 0:
        raise UnsupportedSpinError(sph_map.spin, operation)
    if sph_map.grid.L != kernels.L:
        raise DimensionError(f"Map band-limit L={sph_map.grid.L} does not match kernels L={kernels.L}.")


def _check_coeffs(coeffs: WaveletCoeffs, kernels: WaveletKernels) -> None:
    if coeffs.grid.L != kernels.L:
        raise DimensionError(f"Coefficient band-limit L={coeffs.grid.L} does not match kernels L={kernels.L}.")
    if coeffs.scales.shape[:2] != (kernels.n_scales, kernels.N):
        raise DimensionError(
            f"Expected {kernels.n_scales} scales x {kernels.N} directions, got {coeffs.scales.shape[:2]}."
        )


def wavelet_analysis(sph_map: SphMap, kernels: WaveletKernels) -> WaveletCoeffs:
    """Directional convolution with every wavelet and the scaling function (Psi^-1)."""
    _check_map(sph_map, kernels, "wavelet_analysis")
    grid, L = sph_map.grid, kernels.L
    scaling_mult, analysis_mult, _ = kernels.multipliers()
    phases = kernels.phases()
    flm = sht_forward(sph_map).coeffs

    scaling = sht_inverse(HarmonicCoeffs(L, 0, flm * scaling_mult), grid)
    scales = np.zeros((kernels.n_scales, kernels.N) + grid.shape, dtype=np.complex128)
    for j in range(kernels.n_scales):
        for col, n in enumerate(kernels.orders):
            if not np.any(analysis_mult[j, col]):
                continue
            band = sht_inverse(HarmonicCoeffs(L, -int(n), flm * analysis_mult[j, col]), grid).values
            scales[j] += phases[:, col, None, None] * band[None]
    return WaveletCoeffs(grid, scaling, scales)


def wavelet_synthesis(coeffs: WaveletCoeffs, kernels: WaveletKernels) -> SphMap:
    """Left inverse of wavelet_analysis on band-limited maps (Psi)."""
    _check_coeffs(coeffs, kernels)
    grid, L = coeffs.grid, kernels.L
    scaling_mult, _, synthesis_mult = kernels.multipliers()
    phases = kernels.phases()

    flm = scaling_mult * sht_forward(coeffs.scaling).coeffs
    for j in range(kernels.n_scales):
        for col, n in enumerate(kernels.orders):
            if not np.any(synthesis_mult[j, col]):
                continue
            band = np.tensordot(np.conj(phases[:, col]), coeffs.scales[j], axes=1) / kernels.N
            flm = flm + synthesis_mult[j, col] * sht_forward(SphMap(grid, -int(n), band)).coeffs
    return sht_inverse(HarmonicCoeffs(L, 0, flm), grid)


def wavelet_analysis_adjoint(coeffs: WaveletCoeffs, kernels: WaveletKernels) -> SphMap:
    """Exact adjoint of wavelet_analysis, (Psi^-1)^dagger."""
    _check_coeffs(coeffs, kernels)
    grid, L = coeffs.grid, kernels.L
    scaling_mult, analysis_mult, _ = kernels.multipliers()
    phases = kernels.phases()

    flm = scaling_mult * sht_inverse_adjoint(coeffs.scaling).coeffs
    for j in range(kernels.n_scales):
        for col, n in enumerate(kernels.orders):
            if not np.any(analysis_mult[j, col]):
                continue
            band = np.tensordot(np.conj(phases[:, col]), coeffs.scales[j], axes=1)
            flm = flm + analysis_mult[j, col] * sht_inverse_adjoint(SphMap(grid, -int(n), band)).coeffs
    return sht_forward_adjoint(HarmonicCoeffs(L, 0, flm), grid)


def wavelet_synthesis_adjoint(sph_map: SphMap, kernels: WaveletKernels) -> WaveletCoeffs:
    """Exact adjoint of wavelet_synthesis, Psi^dagger."""
    _check_map(sph_map, kernels, "wavelet_synthesis_adjoint")
    grid, L = sph_map.grid, kernels.L
    scaling_mult, _, synthesis_mult = kernels.multipliers()
    phases = kernels.phases()
    vlm = sht_inverse_adjoint(sph_map).coeffs

    scaling = sht_forward_adjoint(HarmonicCoeffs(L, 0, scaling_mult * vlm), grid)
    scales = np.zeros((kernels.n_scales, kernels.N) + grid.shape, dtype=np.complex128)
    for j in range(kernels.n_scales):
        for col, n in enumerate(kernels.orders):
            if not np.any(synthesis_mult[j, col]):
                continue
            band = sht_forward_adjoint(HarmonicCoeffs(L, -int(n), synthesis_mult[j, col] * vlm), grid).values
            scales[j] += phases[:, col, None, None] * band[None] / kernels.N
    return WaveletCoeffs(grid, scaling, scales)
