"""Sphere-weighted norms, regularisers and their proximal operators."""

from __future__ import annotations

import logging
import warnings
from dataclasses import dataclass
from typing import Dict, Optional, Tuple, Union

import numpy as np

from .exceptions import (
    ConvergenceWarning,
    DimensionError,
    InvalidParameterError,
    InvalidRadiusError,
    NonconvexOrderError,
    UnsupportedRegularizerError,
    UnsupportedSpinError,
)
from .operators import LinearOperator, gradient_norm_bound, gradient_operator, operator_norm
from .sphere import SphGrid, SphMap, as_values
from .wavelets import WaveletCoeffs

logger = logging.getLogger(__name__)

REGULARIZER_KINDS = ("weighted-lp", "wavelet-l1", "tv", "l2-squared")

Weights = Union[float, np.ndarray]


def area_weights(grid: SphGrid, p: float = 1.0) -> np.ndarray:
    """w = area^(1/p), so that ||w o x||_p^p approximates the integral of |x|^p."""
    if p < 1.0:
        raise NonconvexOrderError(p)
    return grid.pixel_areas ** (1.0 / p)


def _broadcast_weights(weights: Optional[Weights], shape: Tuple[int, ...]) -> np.ndarray:
    if weights is None:
        return np.ones(shape)
    w = np.asarray(weights, dtype=np.float64)
    try:
        return np.broadcast_to(w, shape)
    except ValueError as exc:
        raise DimensionError(f"Weights of shape {w.shape} do not fit values of shape {shape}.") from exc


def weighted_lp_norm(x: Union[SphMap, np.ndarray], w: Optional[Weights] = None, p: float = 1.0) -> float:
    if p < 1.0:
        raise NonconvexOrderError(p)
    values = as_values(x)
    weighted = _broadcast_weights(w, values.shape) * values
    return float(np.linalg.norm(weighted.ravel(), ord=p))


def wavelet_space_norm(
    alpha: Union[WaveletCoeffs, np.ndarray], weights: Optional[Weights] = None, p: float = 1.0
) -> float:
    """(sum over slices of ||w o alpha_slice||_p^p)^(1/p); the scaling map counts as a slice."""
    stacked = alpha.to_array() if isinstance(alpha, WaveletCoeffs) else np.asarray(alpha)
    if stacked.ndim != 3:
        raise DimensionError(f"Expected stacked wavelet slices (n_slices, n_theta, n_phi), got {stacked.shape}.")
    return weighted_lp_norm(stacked, weights, p)


def spherical_gradient(x: SphMap) -> Tuple[SphMap, SphMap]:
    if x.spin != 0:
        raise UnsupportedSpinError(x.spin, "spherical_gradient")
    g = gradient_operator(x.grid).apply(x.values)
    return SphMap(x.grid, 0, g[0]), SphMap(x.grid, 0, g[1])


def _group_magnitude(g: np.ndarray) -> np.ndarray:
    return np.sqrt(np.sum(np.abs(g) ** 2, axis=0))


def tv_norm(x: SphMap, w: Optional[Weights] = None) -> float:
    """Isotropic total variation sum_t w_t |grad x|_t."""
    g_theta, g_phi = spherical_gradient(x)
    magnitude = _group_magnitude(np.stack([g_theta.values, g_phi.values]))
    return float(np.sum(_broadcast_weights(w, magnitude.shape) * magnitude))


def prox_l1_weighted(z: np.ndarray, tau: float, w: Optional[Weights] = None) -> np.ndarray:
    """Soft-threshold by tau * w; complex entries keep their phase."""
    if tau < 0.0:
        raise InvalidParameterError(f"Proximal step must be non-negative (got {tau}).")
    z = np.asarray(z)
    magnitude = np.abs(z)
    shrunk = np.maximum(magnitude - tau * _broadcast_weights(w, z.shape), 0.0)
    scale = np.divide(shrunk, magnitude, out=np.zeros_like(magnitude), where=magnitude > 0.0)
    return z * scale


def project_l2_ball(z: np.ndarray, center: Union[float, np.ndarray], radius: float) -> np.ndarray:
    if not radius > 0.0:
        raise InvalidRadiusError(f"Ball radius must be positive (got {radius}).")
    z = np.asarray(z)
    offset = z - center
    distance = np.linalg.norm(offset)
    if distance <= radius:
        return z.copy()
    return center + offset * (radius / distance)


def prox_l2_squared(
    z: np.ndarray, tau: float, center: Union[float, np.ndarray] = 0.0, sigma: float = 1.0
) -> np.ndarray:
    """Prox of u -> ||u - c||^2 / (2 sigma^2)."""
    ratio = tau / sigma ** 2
    return (np.asarray(z) + ratio * center) / (1.0 + ratio)


def _project_dual(v: np.ndarray, bound: np.ndarray, isotropic: bool) -> np.ndarray:
    magnitude = _group_magnitude(v) if isotropic else np.abs(v)
    scale = np.minimum(1.0, np.divide(bound, magnitude, out=np.ones_like(magnitude), where=magnitude > bound))
    return v * scale


@dataclass
class DualProxResult:
    solution: np.ndarray
    dual: np.ndarray
    iterations: int
    converged: bool


def dual_prox_l1(
    z: np.ndarray,
    tau: float,
    op: LinearOperator,
    weights: Optional[Weights] = None,
    isotropic: bool = False,
    max_iter: int = 500,
    tol: float = 1e-8,
    dual_init: Optional[np.ndarray] = None,
    norm_sq: Optional[float] = None,
) -> DualProxResult:
    """Prox of tau ||w o K u||_1 (or its isotropic group form) through the dual problem.

    Accelerated projected gradient on v with u = z - K^H v and |v| <= tau w, restarting
    the momentum whenever it points uphill.
    """
    z = np.asarray(z)
    if tau == 0.0:
        return DualProxResult(z.copy(), np.zeros(op.out_domain.shape, dtype=np.complex128), 0, True)
    if norm_sq is None:
        norm_sq = 1.01 * operator_norm(op) ** 2
    bound_shape = op.out_domain.shape[1:] if isotropic else op.out_domain.shape
    bound = tau * _broadcast_weights(weights, bound_shape)

    v = np.zeros(op.out_domain.shape, dtype=np.complex128) if dual_init is None else dual_init.copy()
    v = _project_dual(v, bound, isotropic)
    momentum = v.copy()
    t = 1.0
    u = z - op.adjoint(v)
    converged = False
    iteration = 0
    for iteration in range(1, max_iter + 1):
        v_next = _project_dual(momentum + op.apply(z - op.adjoint(momentum)) / norm_sq, bound, isotropic)
        u_next = z - op.adjoint(v_next)
        t_next = 0.5 * (1.0 + np.sqrt(1.0 + 4.0 * t * t))
        if np.real(np.vdot(momentum - v_next, v_next - v)) > 0.0:
            t_next = 1.0
            momentum = v_next
        else:
            momentum = v_next + ((t - 1.0) / t_next) * (v_next - v)
        change = np.linalg.norm(u_next - u) / max(np.linalg.norm(u_next), np.finfo(float).tiny)
        v, u, t = v_next, u_next, t_next
        if change < tol:
            converged = True
            break
    return DualProxResult(u, v, iteration, converged)


def prox_tv(
    z: SphMap, tau: float, w: Optional[Weights] = None, max_iter: int = 500, tol: float = 1e-8
) -> SphMap:
    """Approximate prox of tau * TV_w; warns with ConvergenceWarning if max_iter is hit."""
    if z.spin != 0:
        raise UnsupportedSpinError(z.spin, "prox_tv")
    grid = z.grid
    result = dual_prox_l1(
        z.values,
        tau,
        gradient_operator(grid),
        weights=w,
        isotropic=True,
        max_iter=max_iter,
        tol=tol,
        norm_sq=gradient_norm_bound(grid),
    )
    if not result.converged:
        logger.warning("TV prox stopped after %d iterations without reaching tol=%g", result.iterations, tol)
        warnings.warn(f"prox_tv did not converge in {max_iter} iterations", ConvergenceWarning, stacklevel=2)
    values = result.solution if np.iscomplexobj(z.values) else result.solution.real
    return SphMap(grid, 0, values)


@dataclass(frozen=True, eq=False)
class RegSpec:
    """Convex regulariser g(u) = norm(w o K u) with optional analysis transform K."""

    kind: str
    p: float = 1.0
    weights: Optional[np.ndarray] = None
    transform: Optional[LinearOperator] = None
    inner_max_iter: int = 200
    inner_tol: float = 1e-8
    transform_norm_sq: Optional[float] = None

    def __post_init__(self) -> None:
        if self.kind not in REGULARIZER_KINDS:
            raise UnsupportedRegularizerError(
                f"Unknown regulariser '{self.kind}' (expected one of {', '.join(REGULARIZER_KINDS)})."
            )
        if self.p < 1.0:
            raise NonconvexOrderError(self.p)
        if self.kind == "tv" and (self.transform is None or self.transform.out_domain.kind != "gradient"):
            raise UnsupportedRegularizerError("TV needs the spherical gradient as transform; use RegSpec.tv().")

    @classmethod
    def tv(cls, grid: SphGrid, weights: Optional[np.ndarray] = None, **kwargs) -> "RegSpec":
        return cls(
            "tv",
            weights=weights,
            transform=gradient_operator(grid),
            transform_norm_sq=gradient_norm_bound(grid),
            **kwargs,
        )

    @property
    def homogeneity(self) -> int:
        return 2 if self.kind == "l2-squared" else 1

    @property
    def is_l1(self) -> bool:
        return self.kind == "wavelet-l1" or (self.kind == "weighted-lp" and self.p == 1.0)

    def transformed(self, u: np.ndarray) -> np.ndarray:
        return self.transform.apply(u) if self.transform is not None else u

    def value(self, u: np.ndarray) -> float:
        return self.norm(self.transformed(u))

    def norm(self, v: np.ndarray) -> float:
        """g evaluated on an already transformed vector."""
        if self.kind == "tv":
            magnitude = _group_magnitude(v)
            return float(np.sum(_broadcast_weights(self.weights, magnitude.shape) * magnitude))
        weighted = _broadcast_weights(self.weights, v.shape) * v
        if self.kind == "l2-squared":
            return float(np.sum(np.abs(weighted) ** 2))
        if self.kind == "wavelet-l1":
            return float(np.sum(np.abs(weighted)))
        return float(np.linalg.norm(weighted.ravel(), ord=self.p))

    def prox(self, z: np.ndarray, tau: float, state: Optional[Dict[str, np.ndarray]] = None) -> np.ndarray:
        """prox of tau * g; ``state`` keeps the inner dual iterate between calls."""
        if tau == 0.0:
            return z.copy()
        if self.transform is None:
            if self.is_l1:
                return prox_l1_weighted(z, tau, self.weights)
            if self.kind == "l2-squared":
                return z / (1.0 + 2.0 * tau * _broadcast_weights(self.weights, z.shape) ** 2)
            raise UnsupportedRegularizerError(f"No closed-form prox for '{self.kind}' with p={self.p}.")
        if not (self.is_l1 or self.kind == "tv"):
            raise UnsupportedRegularizerError(
                f"'{self.kind}' through an analysis transform is only supported by primal-dual."
            )
        state = state if state is not None else {}
        if "norm_sq" not in state:
            state["norm_sq"] = self.transform_norm_sq or 1.01 * operator_norm(self.transform) ** 2
        result = dual_prox_l1(
            z,
            tau,
            self.transform,
            weights=self.weights,
            isotropic=self.kind == "tv",
            max_iter=self.inner_max_iter,
            tol=self.inner_tol,
            dual_init=state.get("dual"),
            norm_sq=state["norm_sq"],
        )
        state["dual"] = result.dual
        if not result.converged:
            logger.debug("Inner prox hit %d iterations", result.iterations)
        return result.solution

    def dual_prox(self, v: np.ndarray, sigma: float, lam: float) -> np.ndarray:
        """prox of sigma * h^* for h(v) = lam * norm(w o v), used by primal-dual."""
        if self.kind == "l2-squared":
            scale = lam * _broadcast_weights(self.weights, v.shape) ** 2
            return np.divide(v, 1.0 + sigma / (2.0 * scale), out=np.zeros_like(v), where=scale > 0.0)
        if self.kind == "tv":
            return _project_dual(v, lam * _broadcast_weights(self.weights, v.shape[1:]), isotropic=True)
        if self.is_l1:
            return _project_dual(v, lam * _broadcast_weights(self.weights, v.shape), isotropic=False)
        raise UnsupportedRegularizerError(f"No conjugate prox for '{self.kind}' with p={self.p}.")
