"""Linear measurement operators with exact adjoints.

Operators act on plain numpy arrays so the solvers can treat pixel maps, harmonic
coefficient vectors, measurement vectors and stacked wavelet coefficients alike.
Each operator carries the domains it maps between; composition checks that they
line up.
"""

from __future__ import annotations

import logging
import threading
from collections import Counter
from contextlib import contextmanager
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Dict, Iterator, List, Optional, Sequence, Tuple, Union

import numpy as np

from .exceptions import (
    CompositionError,
    DimensionError,
    FormatError,
    InvalidParameterError,
)
from .sphere import (
    FOUR_PI,
    HarmonicCoeffs,
    SphGrid,
    SphMap,
    as_values,
    ell_m_indices,
    sht_forward,
    sht_forward_adjoint,
    sht_inverse,
    sht_inverse_adjoint,
)
from .wavelets import (
    WaveletCoeffs,
    WaveletKernels,
    wavelet_analysis,
    wavelet_analysis_adjoint,
    wavelet_synthesis,
    wavelet_synthesis_adjoint,
)

logger = logging.getLogger(__name__)

ArrayMap = Callable[[np.ndarray], np.ndarray]

_thread_state = threading.local()


@dataclass(frozen=True)
class Domain:
    kind: str
    shape: Tuple[int, ...]
    spin: int = 0
    L: Optional[int] = None

    @classmethod
    def pixel(cls, grid: SphGrid, spin: int = 0) -> "Domain":
        return cls("pixel", grid.shape, spin, grid.L)

    @classmethod
    def harmonic(cls, L: int, spin: int = 0) -> "Domain":
        return cls("harmonic", (L * L,), spin, L)

    @classmethod
    def measurement(cls, size: int, spin: int = 0, L: Optional[int] = None) -> "Domain":
        return cls("measurement", (size,), spin, L)

    @classmethod
    def wavelet(cls, grid: SphGrid, n_slices: int) -> "Domain":
        return cls("wavelet", (n_slices,) + grid.shape, 0, grid.L)

    @classmethod
    def gradient(cls, grid: SphGrid) -> "Domain":
        return cls("gradient", (2,) + grid.shape, 0, grid.L)

    @classmethod
    def vector(cls, size: int) -> "Domain":
        return cls("vector", (size,))

    def __str__(self) -> str:
        parts = [f"{self.kind}{list(self.shape)}"]
        if self.L is not None:
            parts.append(f"L={self.L}")
        parts.append(f"spin={self.spin}")
        return " ".join(parts)


class LinearOperator:
    """A linear map with its exact adjoint and call counters."""

    def __init__(
        self,
        forward: ArrayMap,
        adjoint: ArrayMap,
        in_domain: Domain,
        out_domain: Domain,
        name: str = "op",
        parts: Sequence["LinearOperator"] = (),
    ) -> None:
        self._forward = forward
        self._adjoint = adjoint
        self.in_domain = in_domain
        self.out_domain = out_domain
        self.name = name
        self.parts = tuple(parts)
        self.calls: Counter = Counter()
        self._lock = threading.Lock()

    def __repr__(self) -> str:
        return f"LinearOperator({self.name}: {self.in_domain} -> {self.out_domain})"

    def _count(self, kind: str) -> None:
        with self._lock:
            self.calls[kind] += 1
        if not self.parts:
            for tally in getattr(_thread_state, "tallies", ()):
                tally[f"{self.name}.{kind}"] += 1

    def apply(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x)
        if x.shape != self.in_domain.shape:
            raise DimensionError(f"{self.name} expects input shape {self.in_domain.shape}, got {x.shape}.")
        self._count("apply")
        return self._forward(x)

    def adjoint(self, y: np.ndarray) -> np.ndarray:
        y = np.asarray(y)
        if y.shape != self.out_domain.shape:
            raise DimensionError(f"{self.name}^H expects input shape {self.out_domain.shape}, got {y.shape}.")
        self._count("adjoint")
        return self._adjoint(y)

    @property
    def H(self) -> "LinearOperator":
        return LinearOperator(
            self.adjoint, self.apply, self.out_domain, self.in_domain, name=f"{self.name}^H", parts=(self,)
        )


def call_counts(op: LinearOperator) -> Dict[str, int]:
    """Apply/adjoint invocations of every leaf operator inside ``op``."""
    totals: Counter = Counter()
    if not op.parts:
        with op._lock:
            counted = list(op.calls.items())
        for kind, count in counted:
            totals[f"{op.name}.{kind}"] += count
        return dict(totals)
    for part in op.parts:
        totals.update(call_counts(part))
    return dict(totals)


def reset_counts(op: LinearOperator) -> None:
    with op._lock:
        op.calls.clear()
    for part in op.parts:
        reset_counts(part)


@contextmanager
def thread_call_tally() -> Iterator[Counter]:
    """Leaf applications made by the calling thread while the block runs.

    Counters on shared operators also see other threads; this tally does not.
    """
    tally: Counter = Counter()
    outer = getattr(_thread_state, "tallies", ())
    _thread_state.tallies = outer + (tally,)
    try:
        yield tally
    finally:
        _thread_state.tallies = outer


def identity(domain: Domain) -> LinearOperator:
    return LinearOperator(lambda x: x.copy(), lambda y: y.copy(), domain, domain, name="I")


def zero_operator(in_domain: Domain, out_domain: Domain) -> LinearOperator:
    return LinearOperator(
        lambda x: np.zeros(out_domain.shape, dtype=np.complex128),
        lambda y: np.zeros(in_domain.shape, dtype=np.complex128),
        in_domain,
        out_domain,
        name="0",
    )


def compose(ops: Sequence[LinearOperator]) -> LinearOperator:
    """Pipeline applied left to right: compose([A, B]) x = B(A(x))."""
    ops = list(ops)
    if not ops:
        raise CompositionError(0, "nothing", "at least one operator")
    for position in range(1, len(ops)):
        produced = ops[position - 1].out_domain
        expected = ops[position].in_domain
        if produced != expected:
            raise CompositionError(position, produced, expected)

    def forward(x: np.ndarray) -> np.ndarray:
        for op in ops:
            x = op.apply(x)
        return x

    def adjoint(y: np.ndarray) -> np.ndarray:
        for op in reversed(ops):
            y = op.adjoint(y)
        return y

    name = " -> ".join(op.name for op in ops)
    return LinearOperator(forward, adjoint, ops[0].in_domain, ops[-1].out_domain, name=name, parts=ops)


def _random_vector(shape: Tuple[int, ...], rng: np.random.Generator) -> np.ndarray:
    return rng.standard_normal(shape) + 1j * rng.standard_normal(shape)


def dot_test(op: LinearOperator, n_seeds: int = 20, seed: int = 0) -> float:
    """Largest |<Ax, y> - <x, A^H y>| / (|Ax| |y|) over random probes."""
    worst = 0.0
    for trial in range(n_seeds):
        rng = np.random.default_rng([seed, trial])
        x = _random_vector(op.in_domain.shape, rng)
        y = _random_vector(op.out_domain.shape, rng)
        ax = op.apply(x)
        ahy = op.adjoint(y)
        scale = np.linalg.norm(ax) * np.linalg.norm(y)
        if scale == 0.0:
            continue
        residual = abs(np.vdot(y, ax) - np.vdot(ahy, x)) / scale
        worst = max(worst, float(residual))
    return worst


def operator_norm(op: LinearOperator, max_iter: int = 100, tol: float = 1e-8, seed: int = 0) -> float:
    """Power-iteration estimate of the spectral norm."""
    rng = np.random.default_rng(seed)
    x = _random_vector(op.in_domain.shape, rng)
    x /= np.linalg.norm(x)
    estimate = 0.0
    for _ in range(max_iter):
        z = op.adjoint(op.apply(x))
        size = np.linalg.norm(z)
        if size == 0.0:
            return 0.0
        updated = float(np.sqrt(size))
        x = z / size
        if abs(updated - estimate) <= tol * updated:
            return updated
        estimate = updated
    return estimate


@dataclass(frozen=True, eq=False)
class MaskSpec:
    keep: np.ndarray

    def __post_init__(self) -> None:
        if self.keep.dtype != np.bool_:
            raise DimensionError("Mask must be a boolean array.")

    @property
    def M(self) -> int:
        return int(np.count_nonzero(self.keep))

    @classmethod
    def full(cls, grid: SphGrid) -> "MaskSpec":
        return cls(np.ones(grid.shape, dtype=bool))


def mask_apply(x: Union[SphMap, np.ndarray], mask: MaskSpec) -> np.ndarray:
    values = as_values(x)
    if values.shape != mask.keep.shape:
        raise DimensionError(f"Map shape {values.shape} does not match mask shape {mask.keep.shape}.")
    return values[mask.keep]


def mask_adjoint(y: np.ndarray, mask: MaskSpec, grid: SphGrid, spin: int = 0) -> SphMap:
    y = np.asarray(y)
    if y.shape != (mask.M,):
        raise DimensionError(f"Measurement vector has shape {y.shape}, mask keeps {mask.M} pixels.")
    values = np.zeros(grid.shape, dtype=np.result_type(y.dtype, np.float64))
    values[mask.keep] = y
    return SphMap(grid, spin, values)


def mask_operator(mask: MaskSpec, grid: SphGrid, spin: int = 0) -> LinearOperator:
    return LinearOperator(
        lambda x: mask_apply(x, mask),
        lambda y: mask_adjoint(y, mask, grid, spin).values,
        Domain.pixel(grid, spin),
        Domain.measurement(mask.M, spin, grid.L),
        name="D",
    )


@dataclass(frozen=True, eq=False)
class HarmonicScaling:
    values: np.ndarray

    def __post_init__(self) -> None:
        if self.values.ndim != 1 or np.iscomplexobj(self.values):
            raise DimensionError("Harmonic scaling must be a real per-l vector.")

    @property
    def L(self) -> int:
        return self.values.size


def gaussian_beam(fwhm: float, L: int) -> HarmonicScaling:
    if not fwhm > 0.0:
        raise InvalidParameterError(f"Beam FWHM must be positive (got {fwhm}).")
    sigma_b = fwhm / np.sqrt(8.0 * np.log(2.0))
    ells = np.arange(L, dtype=np.float64)
    return HarmonicScaling(np.exp(-ells * (ells + 1.0) * sigma_b ** 2 / 2.0))


def lensing_kernel(L: int) -> HarmonicScaling:
    """Convergence-to-shear multiplier sqrt((l+2)(l-1) / (l(l+1))), zero below l = 2."""
    if L < 3:
        raise InvalidParameterError(f"Lensing kernel needs L >= 3 (got {L}).")
    ells = np.arange(L, dtype=np.float64)
    values = np.zeros(L)
    high = ells >= 2
    values[high] = np.sqrt((ells[high] + 2.0) * (ells[high] - 1.0) / (ells[high] * (ells[high] + 1.0)))
    return HarmonicScaling(values)


def harmonic_scale_apply(coeffs: HarmonicCoeffs, scaling: HarmonicScaling) -> HarmonicCoeffs:
    if coeffs.L != scaling.L:
        raise DimensionError(f"Scaling has L={scaling.L} but coefficients have L={coeffs.L}.")
    ells, _ = ell_m_indices(coeffs.L)
    return HarmonicCoeffs(coeffs.L, coeffs.spin, coeffs.coeffs * scaling.values[ells])


def harmonic_scaling_operator(
    scaling: HarmonicScaling,
    in_spin: int = 0,
    out_spin: Optional[int] = None,
    name: str = "B",
) -> LinearOperator:
    """Diagonal per-l multiplier; ``out_spin`` relabels the output (spin-changing kernels)."""
    L = scaling.L
    out_spin = in_spin if out_spin is None else out_spin
    ells, _ = ell_m_indices(L)
    factors = scaling.values[ells]
    return LinearOperator(
        lambda x: x * factors,
        lambda y: y * factors,
        Domain.harmonic(L, in_spin),
        Domain.harmonic(L, out_spin),
        name=name,
    )


def sht_operator(grid: SphGrid, spin: int = 0) -> LinearOperator:
    return LinearOperator(
        lambda x: sht_forward(SphMap(grid, spin, x)).coeffs,
        lambda y: sht_forward_adjoint(HarmonicCoeffs(grid.L, spin, y), grid).values,
        Domain.pixel(grid, spin),
        Domain.harmonic(grid.L, spin),
        name="Y",
    )


def inverse_sht_operator(grid: SphGrid, spin: int = 0) -> LinearOperator:
    return LinearOperator(
        lambda x: sht_inverse(HarmonicCoeffs(grid.L, spin, x), grid).values,
        lambda y: sht_inverse_adjoint(SphMap(grid, spin, y)).coeffs,
        Domain.harmonic(grid.L, spin),
        Domain.pixel(grid, spin),
        name="Y^-1",
    )


def bandlimit_operator(grid: SphGrid, spin: int = 0) -> LinearOperator:
    """Pixel-space projection Y^-1 Y onto band-limited signals."""
    return compose([sht_operator(grid, spin), inverse_sht_operator(grid, spin)])


def wavelet_analysis_operator(kernels: WaveletKernels, grid: SphGrid) -> LinearOperator:
    """Psi^-1: pixel map to stacked wavelet coefficients."""
    return LinearOperator(
        lambda x: wavelet_analysis(SphMap(grid, 0, x), kernels).to_array(),
        lambda w: wavelet_analysis_adjoint(WaveletCoeffs.from_array(grid, w, kernels), kernels).values,
        Domain.pixel(grid),
        Domain.wavelet(grid, kernels.n_slices),
        name="Psi^-1",
    )


def wavelet_synthesis_operator(kernels: WaveletKernels, grid: SphGrid) -> LinearOperator:
    """Psi: stacked wavelet coefficients to pixel map."""
    return LinearOperator(
        lambda w: wavelet_synthesis(WaveletCoeffs.from_array(grid, w, kernels), kernels).values,
        lambda x: wavelet_synthesis_adjoint(SphMap(grid, 0, x), kernels).to_array(),
        Domain.wavelet(grid, kernels.n_slices),
        Domain.pixel(grid),
        name="Psi",
    )


def gradient_norm_bound(grid: SphGrid) -> float:
    """Upper bound on the squared spectral norm of the gradient operator."""
    bound = 4.0 / np.min(np.sin(grid.thetas) * grid.delta_phi) ** 2
    if grid.n_theta > 1:
        bound += 4.0 / np.min(np.diff(grid.thetas)) ** 2
    return float(bound)


def gradient_operator(grid: SphGrid) -> LinearOperator:
    """Forward differences: theta one-sided (zero on the last ring), phi periodic with 1/sin(theta)."""
    d_theta = np.diff(grid.thetas)[:, None]
    phi_scale = (np.sin(grid.thetas) * grid.delta_phi)[:, None]

    def forward(x: np.ndarray) -> np.ndarray:
        out = np.zeros((2,) + grid.shape, dtype=np.result_type(x.dtype, np.float64))
        out[0, :-1] = (x[1:] - x[:-1]) / d_theta
        out[1] = (np.roll(x, -1, axis=1) - x) / phi_scale
        return out

    def adjoint(g: np.ndarray) -> np.ndarray:
        out = np.zeros(grid.shape, dtype=np.result_type(g.dtype, np.float64))
        theta_part = g[0, :-1] / d_theta
        out[1:] += theta_part
        out[:-1] -= theta_part
        phi_part = g[1] / phi_scale
        out += np.roll(phi_part, 1, axis=1) - phi_part
        return out

    return LinearOperator(forward, adjoint, Domain.pixel(grid), Domain.gradient(grid), name="grad")


def default_power_spectrum(L: int) -> np.ndarray:
    """C_l = (l+1)^-2 scaled so that sum_l (2l+1) C_l / 4pi = 1."""
    ells = np.arange(L, dtype=np.float64)
    cl = (ells + 1.0) ** -2
    return cl / (np.sum((2.0 * ells + 1.0) * cl) / FOUR_PI)


def load_power_spectrum(path: Union[str, Path], L: int) -> np.ndarray:
    """Read a two-column ``l value`` table; rows must start at l = 0 and be contiguous."""
    try:
        table = np.loadtxt(path, ndmin=2)
    except (OSError, ValueError) as exc:
        raise FormatError(path, f"cannot parse power spectrum ({exc})") from exc
    if table.shape[1] != 2:
        raise FormatError(path, "power spectrum must have exactly two columns")
    ells = table[:, 0]
    if not np.array_equal(ells, np.arange(ells.size)):
        raise FormatError(path, "multipoles must start at 0 and increase by one")
    if ells.size < L:
        raise FormatError(path, f"table stops at l={ells.size - 1}, need l up to {L - 1}")
    cl = table[:L, 1]
    if np.any(cl < 0.0):
        raise FormatError(path, "power spectrum values must be non-negative")
    return cl


def power_spectrum_scaling(cl: np.ndarray) -> HarmonicScaling:
    return HarmonicScaling(np.sqrt(np.asarray(cl, dtype=np.float64)))


def _mask_or_full(mask: Optional[MaskSpec], grid: SphGrid) -> MaskSpec:
    return mask if mask is not None else MaskSpec.full(grid)


def topography_operator(
    grid: SphGrid, mask: Optional[MaskSpec] = None, beam: Optional[HarmonicScaling] = None
) -> LinearOperator:
    """D Y^-1 Theta Y: blur then mask."""
    stages: List[LinearOperator] = [sht_operator(grid)]
    if beam is not None:
        stages.append(harmonic_scaling_operator(beam, name="Theta"))
    stages += [inverse_sht_operator(grid), mask_operator(_mask_or_full(mask, grid), grid)]
    return compose(stages)


def camera_operator(grid: SphGrid, beam: Optional[HarmonicScaling] = None) -> LinearOperator:
    """Y^-1 Theta Y: lens blurring without masking."""
    stages: List[LinearOperator] = [sht_operator(grid)]
    if beam is not None:
        stages.append(harmonic_scaling_operator(beam, name="Theta"))
    stages.append(inverse_sht_operator(grid))
    return compose(stages)


def whitening_dictionary(grid: SphGrid, cl: np.ndarray) -> LinearOperator:
    """Y^-1 C^1/2: whitened harmonic coefficients to pixel signal."""
    return compose(
        [harmonic_scaling_operator(power_spectrum_scaling(cl), name="C^1/2"), inverse_sht_operator(grid)]
    )


def cmb_operator(grid: SphGrid, cl: np.ndarray, mask: Optional[MaskSpec] = None) -> LinearOperator:
    """D Y^-1 C^1/2 acting on whitened harmonic coefficients."""
    return compose([whitening_dictionary(grid, cl), mask_operator(_mask_or_full(mask, grid), grid)])


def lensing_operator(grid: SphGrid, mask: Optional[MaskSpec] = None) -> LinearOperator:
    """D 2Y^-1 W 0Y: real convergence map to masked spin-2 shear."""
    return compose(
        [
            sht_operator(grid, 0),
            harmonic_scaling_operator(lensing_kernel(grid.L), in_spin=0, out_spin=2, name="W"),
            inverse_sht_operator(grid, 2),
            mask_operator(_mask_or_full(mask, grid), grid, spin=2),
        ]
    )
