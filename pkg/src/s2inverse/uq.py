"""MAP-based uncertainty quantification.

The approximate highest-posterior-density region is the level set
{x : h(x) <= epsilon'} of the analysis-form objective h = f + lambda g, with the
threshold computable from the MAP estimate alone. Hypothesis tests and local credible
intervals (LCIs) are both questions about that level set.
"""

from __future__ import annotations

import logging
import math
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Callable, List, Optional, Sequence, Tuple, Union

import numpy as np

from .exceptions import (
    EmptyIntervalError,
    InvalidAlphaError,
    InvalidParameterError,
    InvalidRadiusError,
    InvalidRegionError,
    OverlapError,
    UnboundedIntervalError,
    UnsupportedRegularizerError,
)
from .operators import thread_call_tally
from .priors import RegSpec
from .solvers import ProblemSpec, degrees_of_freedom, objective_eval
from .sphere import SphGrid, SphMap, as_values

logger = logging.getLogger(__name__)

SIGNIFICANT = "significant"
INDETERMINATE = "indeterminate"
LCI_METHODS = ("bisection", "gaussian-analytic", "lasso-hybrid")
COMPONENTS = ("real", "imag")

REL_TOL_XI = 1e-6
REL_TOL_H = 1e-9
GUARD_FACTOR = 1e3
CAP_AREA_SPREAD = 0.05

Region = Union[np.ndarray, Sequence[int]]


@dataclass(frozen=True)
class CredibleThreshold:
    alpha: float
    epsilon_prime: float
    h_map: float
    N: int


def hpd_threshold(h_map: float, N: int, alpha: float) -> CredibleThreshold:
    """epsilon' = h(x_map) + sqrt(16 N ln(3/alpha)) + N."""
    if not 0.0 < alpha < 1.0:
        raise InvalidAlphaError(alpha)
    if N < 1:
        raise InvalidParameterError(f"Dimension N must be >= 1 (got {N}).")
    tau = math.sqrt(16.0 * N * math.log(3.0 / alpha))
    return CredibleThreshold(alpha=alpha, epsilon_prime=h_map + tau + N, h_map=h_map, N=N)


def analysis_form(problem: ProblemSpec) -> ProblemSpec:
    """The pixel-space objective f(x) + lambda g(K x) used for every UQ question.

    Synthesis problems take the adjoint of their dictionary as analysis transform.
    """
    if problem.formulation != "unconstrained":
        raise InvalidParameterError("Uncertainty quantification needs an unconstrained MAP problem.")
    if problem.lam is None:
        raise InvalidParameterError("Uncertainty quantification needs a resolved lambda.")
    if problem.setting == "analysis":
        return problem
    regularizer = replace(problem.regularizer, transform=problem.dictionary.H, transform_norm_sq=None)
    return ProblemSpec(
        phi=problem.phi,
        y=problem.y,
        sigma=problem.sigma,
        regularizer=regularizer,
        lam=problem.lam,
        domain=problem.domain,
    )


def map_threshold(problem: ProblemSpec, x_map: Union[SphMap, np.ndarray], alpha: float) -> CredibleThreshold:
    analysis = analysis_form(problem)
    values = as_values(x_map)
    N = degrees_of_freedom(values.size, problem.domain)
    return hpd_threshold(objective_eval(analysis, values), N, alpha)


@dataclass(frozen=True)
class HypothesisResult:
    verdict: str
    objective: float
    threshold: CredibleThreshold

    @property
    def significant(self) -> bool:
        return self.verdict == SIGNIFICANT


def hypothesis_test(
    problem: ProblemSpec, x_sur: Union[SphMap, np.ndarray], t: CredibleThreshold
) -> HypothesisResult:
    """A feature is significant when removing it leaves the approximate credible region."""
    value = objective_eval(analysis_form(problem), as_values(x_sur))
    verdict = SIGNIFICANT if value > t.epsilon_prime else INDETERMINATE
    logger.info("hypothesis test: h(x_sur)=%.6g vs epsilon'=%.6g -> %s", value, t.epsilon_prime, verdict)
    return HypothesisResult(verdict, value, t)


# Super pixels


@dataclass(frozen=True, eq=False)
class SuperPixelPartition:
    kind: str
    grid: SphGrid
    regions: Tuple[np.ndarray, ...]

    def __post_init__(self) -> None:
        seen = np.zeros(self.grid.size, dtype=np.int64)
        for region in self.regions:
            np.add.at(seen, region, 1)
        if np.any(seen > 1):
            overlapping = [i for i, region in enumerate(self.regions) if np.any(seen[region] > 1)]
            raise OverlapError(overlapping[0], overlapping[-1], 0.0)

    def __len__(self) -> int:
        return len(self.regions)

    def indicator(self, index: int) -> np.ndarray:
        return make_indicator(self, index)

    def areas(self) -> np.ndarray:
        flat = self.grid.pixel_areas.ravel()
        return np.array([flat[region].sum() for region in self.regions])


def make_indicator(partition: SuperPixelPartition, index: int) -> np.ndarray:
    mask = np.zeros(partition.grid.size, dtype=bool)
    mask[partition.regions[index]] = True
    return mask.reshape(partition.grid.shape)


def make_rect_partition(grid: SphGrid, n_theta_blocks: int, n_phi_blocks: int) -> SuperPixelPartition:
    """Blocks of rings x columns; the integer split lets the last blocks absorb remainders."""
    for name, count, size in (("n_theta_blocks", n_theta_blocks, grid.n_theta), ("n_phi_blocks", n_phi_blocks, grid.n_phi)):
        if int(count) != count or count < 1:
            raise InvalidParameterError(f"{name} must be a positive integer (got {count}).")
        if count > size:
            raise InvalidParameterError(f"{name}={count} exceeds the {size} available pixels along that axis.")
    theta_edges = (np.arange(n_theta_blocks + 1) * grid.n_theta) // n_theta_blocks
    phi_edges = (np.arange(n_phi_blocks + 1) * grid.n_phi) // n_phi_blocks
    flat = np.arange(grid.size).reshape(grid.shape)
    regions = tuple(
        flat[theta_edges[i] : theta_edges[i + 1], phi_edges[j] : phi_edges[j + 1]].ravel()
        for i in range(n_theta_blocks)
        for j in range(n_phi_blocks)
    )
    return SuperPixelPartition("rectangular", grid, regions)


def _unit_vectors(thetas: np.ndarray, phis: np.ndarray) -> np.ndarray:
    return np.stack(
        [np.sin(thetas) * np.cos(phis), np.sin(thetas) * np.sin(phis), np.cos(thetas)], axis=-1
    )


def _rotation_to_pole(theta: float, phi: float) -> np.ndarray:
    """R = R_y(-theta) R_z(-phi), taking the direction (theta, phi) to the north pole."""
    cz, sz = math.cos(phi), math.sin(phi)
    cy, sy = math.cos(theta), math.sin(theta)
    rz = np.array([[cz, sz, 0.0], [-sz, cz, 0.0], [0.0, 0.0, 1.0]])
    ry = np.array([[cy, 0.0, -sy], [0.0, 1.0, 0.0], [sy, 0.0, cy]])
    return ry @ rz


def make_cap_partition(
    grid: SphGrid, centers: Sequence[Tuple[float, float]], radius: float
) -> SuperPixelPartition:
    """Spherical caps: pixels within ``radius`` of the pole after rotating each centre there."""
    if not 0.0 <= radius <= math.pi:
        raise InvalidRadiusError(f"Cap radius must lie in [0, pi] (got {radius}).")
    if not centers:
        raise InvalidParameterError("At least one cap centre is required.")
    directions = _unit_vectors(*np.asarray(centers, dtype=np.float64).T)
    for i in range(len(centers)):
        for j in range(i + 1, len(centers)):
            distance = float(np.arccos(np.clip(directions[i] @ directions[j], -1.0, 1.0)))
            if distance < 2.0 * radius:
                raise OverlapError(i, j, distance)

    theta_grid, phi_grid = np.meshgrid(grid.thetas, grid.phis, indexing="ij")
    pixels = _unit_vectors(theta_grid, phi_grid).reshape(-1, 3)
    regions = []
    for theta, phi in centers:
        rotated = pixels @ _rotation_to_pole(theta, phi).T
        colatitude = np.arccos(np.clip(rotated[:, 2], -1.0, 1.0))
        members = np.flatnonzero(colatitude <= radius)
        nearest = int(np.argmin(colatitude))
        regions.append(np.union1d(members, [nearest]))
    partition = SuperPixelPartition("cap", grid, tuple(regions))

    areas = partition.areas()
    spread = areas.max() / areas.min() - 1.0
    if spread > CAP_AREA_SPREAD:
        logger.warning("Cap areas differ by %.1f%% at L=%d", 100.0 * spread, grid.L)
        warnings.warn(f"cap areas differ by {100.0 * spread:.1f}%", stacklevel=2)
    return partition


def _region_mask(region: Region, shape: Tuple[int, ...]) -> np.ndarray:
    region = np.asarray(region)
    if region.dtype == bool:
        if region.shape != shape:
            raise InvalidRegionError(f"Region mask has shape {region.shape}, map has {shape}.")
        mask = region.copy()
    else:
        mask = np.zeros(int(np.prod(shape)), dtype=bool)
        if region.size:
            if region.min() < 0 or region.max() >= mask.size:
                raise InvalidRegionError("Region indices fall outside the map.")
            mask[region.astype(np.int64)] = True
        mask = mask.reshape(shape)
    if not mask.any():
        raise InvalidRegionError("Region is empty.")
    return mask


def remove_feature(x_map: Union[SphMap, np.ndarray], region: Region) -> Union[SphMap, np.ndarray]:
    """Inpaint ``region`` with the mean of its one-pixel neighbourhood (azimuth periodic)."""
    values = as_values(x_map)
    mask = _region_mask(region, values.shape)
    grown = mask.copy()
    grown[1:, :] |= mask[:-1, :]
    grown[:-1, :] |= mask[1:, :]
    grown |= np.roll(mask, 1, axis=1) | np.roll(mask, -1, axis=1)
    ring = grown & ~mask
    fill = values[ring].mean() if ring.any() else 0.0
    surrogate = values.copy()
    surrogate[mask] = fill
    if isinstance(x_map, SphMap):
        return SphMap(x_map.grid, x_map.spin, surrogate)
    return surrogate


# Local credible intervals


@dataclass(frozen=True)
class CredibleInterval:
    lower: float
    upper: float
    method: str
    evaluations: int = 0
    operator_calls: int = 0

    @property
    def length(self) -> float:
        return self.upper - self.lower


def _split_component(values: np.ndarray, mask: np.ndarray, component: str) -> Tuple[np.ndarray, np.ndarray]:
    """Background (region component zeroed) and the unit surrogate direction."""
    if component not in COMPONENTS:
        raise InvalidParameterError(f"component must be one of {COMPONENTS} (got '{component}').")
    values = np.asarray(values, dtype=np.complex128)
    background = values.copy()
    unit = np.zeros_like(background)
    if component == "real":
        background[mask] = 1j * values[mask].imag
        unit[mask] = 1.0
    else:
        background[mask] = values[mask].real
        unit[mask] = 1j
    return background, unit


def _component(values: np.ndarray, component: str) -> np.ndarray:
    return np.real(values) if component == "real" else np.imag(values)


def _scales(values: np.ndarray, mask: np.ndarray, component: str) -> Tuple[float, float]:
    """(region mean, dynamic range) of the chosen component."""
    part = _component(values, component)
    dynamic = float(part.max() - part.min())
    if dynamic <= 0.0:
        dynamic = max(float(np.abs(part).max()), 1.0)
    return float(part[mask].mean()), dynamic


def _bisect(
    func: Callable[[float], float],
    inside: float,
    outside: float,
    threshold: float,
    tol_xi: float,
    tol_h: float,
    h_inside: Optional[float] = None,
) -> Tuple[float, int]:
    evaluations = 0
    if h_inside is None:
        h_inside = func(inside)
        evaluations += 1
    while abs(outside - inside) > tol_xi or threshold - h_inside > tol_h:
        middle = 0.5 * (inside + outside)
        if middle in (inside, outside):
            break
        value = func(middle)
        evaluations += 1
        if value <= threshold:
            inside, h_inside = middle, value
        else:
            outside = middle
    return inside, evaluations


def bisect_credible_interval(
    func: Callable[[float], float],
    xi0: float,
    threshold: float,
    tol_xi: float,
    tol_h: float,
    guard: float,
) -> Tuple[float, float, int]:
    """Interval {xi : func(xi) <= threshold} around the inside point ``xi0``.

    The bracket grows geometrically from ``xi0`` until func crosses the threshold, then each
    side is bisected. Returns (lower, upper, evaluations); both bounds are inside points.
    """
    h0 = func(xi0)
    evaluations = 1
    if h0 > threshold:
        raise EmptyIntervalError(
            f"Starting intensity {xi0:.6g} is already outside the credible region ({h0:.6g} > {threshold:.6g})."
        )
    bounds = []
    for direction, name in ((-1.0, "lower"), (1.0, "upper")):
        inside, h_inside = xi0, h0
        step = max(guard * 1e-3, tol_xi)
        while True:
            reach = min(step, guard)
            candidate = xi0 + direction * reach
            value = func(candidate)
            evaluations += 1
            if value > threshold:
                break
            inside, h_inside = candidate, value
            if reach >= guard:
                raise UnboundedIntervalError(name, candidate)
            step *= 2.0
        bound, used = _bisect(func, inside, candidate, threshold, tol_xi, tol_h, h_inside)
        evaluations += used
        bounds.append(bound)
    return bounds[0], bounds[1], evaluations


def lci_bisection(
    problem: ProblemSpec,
    x_map: Union[SphMap, np.ndarray],
    region: Region,
    t: CredibleThreshold,
    tol_xi: Optional[float] = None,
    component: str = "real",
) -> CredibleInterval:
    """Bounds of a uniform intensity over ``region`` that keep the surrogate inside the credible region."""
    analysis = analysis_form(problem)
    values = np.asarray(as_values(x_map), dtype=np.complex128)
    mask = _region_mask(region, values.shape)
    background, unit = _split_component(values, mask, component)
    center, dynamic = _scales(values, mask, component)
    tol_xi = REL_TOL_XI * dynamic if tol_xi is None else tol_xi
    tol_h = REL_TOL_H * abs(t.epsilon_prime)

    def objective(xi: float) -> float:
        return objective_eval(analysis, background + xi * unit)

    with thread_call_tally() as tally:
        lower, upper, evaluations = bisect_credible_interval(
            objective, center, t.epsilon_prime, tol_xi, tol_h, GUARD_FACTOR * dynamic
        )
    return CredibleInterval(lower, upper, "bisection", evaluations, sum(tally.values()))


@dataclass(frozen=True, eq=False)
class LinearizedRegion:
    """h(xi) = s_f ||a + xi b||^2 + s_p g(c + xi d), with no operator left to apply."""

    a: np.ndarray
    b: np.ndarray
    c: Optional[np.ndarray] = None
    d: Optional[np.ndarray] = None
    fidelity_scale: float = 1.0
    prior_scale: float = 0.0
    regularizer: Optional[RegSpec] = None
    center: float = 0.0
    guard: Tuple[float, float] = (-math.inf, math.inf)
    tol_xi: float = 1e-6

    def prior(self, xi: float) -> float:
        if self.c is None or self.prior_scale == 0.0:
            return 0.0
        v = self.c + xi * self.d
        if self.regularizer is None:
            return float(np.vdot(v, v).real)
        return self.regularizer.norm(v)

    def objective(self, xi: float) -> float:
        r = self.a + xi * self.b
        return self.fidelity_scale * float(np.vdot(r, r).real) + self.prior_scale * self.prior(xi)


def lci_precompute(
    problem: ProblemSpec,
    x_map: Union[SphMap, np.ndarray],
    region: Region,
    component: str = "real",
) -> LinearizedRegion:
    """a = A x_bg - y, b = A 1_region, c = K x_bg, d = K 1_region: two applications each of A and K."""
    analysis = analysis_form(problem)
    values = np.asarray(as_values(x_map), dtype=np.complex128)
    mask = _region_mask(region, values.shape)
    background, unit = _split_component(values, mask, component)
    center, dynamic = _scales(values, mask, component)
    model = analysis.forward_model()
    reg = analysis.regularizer
    return LinearizedRegion(
        a=model.apply(background) - analysis.data(),
        b=model.apply(unit),
        c=reg.transformed(background),
        d=reg.transformed(unit),
        fidelity_scale=1.0 / (2.0 * analysis.sigma ** 2),
        prior_scale=float(analysis.lam),
        regularizer=reg,
        center=center,
        guard=(center - GUARD_FACTOR * dynamic, center + GUARD_FACTOR * dynamic),
        tol_xi=REL_TOL_XI * dynamic,
    )


def _weighted(r: LinearizedRegion, v: np.ndarray) -> np.ndarray:
    if r.regularizer is None or r.regularizer.weights is None:
        return v
    return np.broadcast_to(np.asarray(r.regularizer.weights, dtype=np.float64), v.shape) * v


def _quadratic_interval(A: float, B: float, C: float) -> Optional[Tuple[float, float]]:
    """{xi : A xi^2 + B xi + C <= 0} for A >= 0; None when empty, infinite ends when unbounded."""
    if A <= 0.0:
        if B == 0.0:
            return (-math.inf, math.inf) if C <= 0.0 else None
        root = -C / B
        return (-math.inf, root) if B > 0.0 else (root, math.inf)
    disc = B * B - 4.0 * A * C
    if disc < 0.0:
        return None
    q = -0.5 * (B + math.copysign(math.sqrt(disc), B))
    first = q / A
    second = C / q if q != 0.0 else -first
    return (min(first, second), max(first, second))


def _clip_to_guard(r: LinearizedRegion, lower: float, upper: float) -> Tuple[float, float]:
    low, high = r.guard
    if lower < low or upper > high:
        logger.debug("Interval [%.6g, %.6g] clipped to guard [%.6g, %.6g]", lower, upper, low, high)
    return max(lower, low), min(upper, high)


def _raise_unbounded(lower: float, upper: float) -> None:
    if math.isinf(lower):
        raise UnboundedIntervalError("lower", lower)
    if math.isinf(upper):
        raise UnboundedIntervalError("upper", upper)


def lci_gaussian_analytic(r: LinearizedRegion, t: CredibleThreshold) -> CredibleInterval:
    """Roots of A xi^2 + B xi + C = epsilon' for Gaussian fidelity and Gaussian prior."""
    if r.regularizer is not None and r.regularizer.kind != "l2-squared":
        raise UnsupportedRegularizerError(
            f"The Gaussian closed form needs an l2-squared prior (got '{r.regularizer.kind}')."
        )
    A = r.fidelity_scale * float(np.vdot(r.b, r.b).real)
    B = 2.0 * r.fidelity_scale * float(np.vdot(r.a, r.b).real)
    C = r.fidelity_scale * float(np.vdot(r.a, r.a).real)
    if r.c is not None and r.prior_scale != 0.0:
        wc, wd = _weighted(r, r.c), _weighted(r, r.d)
        A += r.prior_scale * float(np.vdot(wd, wd).real)
        B += 2.0 * r.prior_scale * float(np.vdot(wc, wd).real)
        C += r.prior_scale * float(np.vdot(wc, wc).real)
    if A <= 0.0:
        raise UnboundedIntervalError("lower" if B >= 0.0 else "upper", -math.inf if B >= 0.0 else math.inf)
    interval = _quadratic_interval(A, B, C - t.epsilon_prime)
    if interval is None:
        raise EmptyIntervalError(
            f"Threshold {t.epsilon_prime:.6g} lies below the minimum {C - B * B / (4.0 * A):.6g} of the objective."
        )
    lower, upper = _clip_to_guard(r, *interval)
    return CredibleInterval(lower, upper, "gaussian-analytic")


def _lasso_interval(r: LinearizedRegion, threshold: float, prior_offset: float) -> Optional[Tuple[float, float]]:
    """Feasible set of the piecewise quadratic s_f||a + xi b||^2 + s_p(offset + |xi| ||w d||_1)."""
    A = r.fidelity_scale * float(np.vdot(r.b, r.b).real)
    B = 2.0 * r.fidelity_scale * float(np.vdot(r.a, r.b).real)
    C = r.fidelity_scale * float(np.vdot(r.a, r.a).real) + r.prior_scale * prior_offset - threshold
    slope = 0.0
    if r.d is not None:
        slope = r.prior_scale * float(np.sum(np.abs(_weighted(r, r.d))))
    pieces = []
    positive = _quadratic_interval(A, B + slope, C)
    if positive is not None and positive[1] >= 0.0:
        pieces.append((max(positive[0], 0.0), positive[1]))
    negative = _quadratic_interval(A, B - slope, C)
    if negative is not None and negative[0] <= 0.0:
        pieces.append((negative[0], min(negative[1], 0.0)))
    if not pieces:
        return None
    return min(p[0] for p in pieces), max(p[1] for p in pieces)


def _feasible_start(
    func: Callable[[float], float], threshold: float, candidates: Sequence[float]
) -> Tuple[float, float, int]:
    """First candidate inside the credible region: (xi, func(xi), evaluations spent)."""
    for used, xi in enumerate(candidates, start=1):
        value = func(xi)
        if value <= threshold:
            return xi, value, used
    tried = ", ".join(f"{xi:.6g}" for xi in candidates)
    raise EmptyIntervalError(f"None of the starting intensities ({tried}) lies inside the credible region.")


def lci_lasso(
    r: LinearizedRegion,
    t: CredibleThreshold,
    lam: Optional[float] = None,
    refine: bool = True,
    tol_xi: Optional[float] = None,
) -> CredibleInterval:
    """Gaussian fidelity with an l1 prior.

    Assuming the region's transform d does not overlap c, g(c + xi d) = ||w c||_1 + |xi| ||w d||_1
    and the interval is closed form. With ``refine`` the exact l1 term is bisected between that
    interval (an inner bound, by the triangle inequality) and the reverse-triangle outer bound.
    Each side starts from the first inside point among the closed-form bound, the interval
    midpoint and the MAP region mean.
    """
    if r.regularizer is not None and not r.regularizer.is_l1:
        raise UnsupportedRegularizerError(f"The lasso closed form needs an l1 prior (got '{r.regularizer.kind}').")
    if lam is not None:
        r = replace(r, prior_scale=lam)
    l1_c = float(np.sum(np.abs(_weighted(r, r.c)))) if r.c is not None else 0.0
    inner = _lasso_interval(r, t.epsilon_prime, l1_c)
    if inner is None:
        raise EmptyIntervalError(f"Threshold {t.epsilon_prime:.6g} lies below the minimum of the objective.")
    _raise_unbounded(*inner)
    lower, upper = _clip_to_guard(r, *inner)
    if not refine:
        return CredibleInterval(lower, upper, "lasso-analytic")

    outer = _lasso_interval(r, t.epsilon_prime, -l1_c) or inner
    outer_lower, outer_upper = _clip_to_guard(r, *outer)
    tol_xi = r.tol_xi if tol_xi is None else tol_xi
    tol_h = REL_TOL_H * abs(t.epsilon_prime)
    anchor = 0.5 * (lower + upper)
    evaluations = 0
    bounds = []
    for start, edge, direction, name in ((lower, outer_lower, -1.0, "lower"), (upper, outer_upper, 1.0, "upper")):
        start, h_start, used = _feasible_start(r.objective, t.epsilon_prime, (start, anchor, r.center))
        evaluations += used
        outside = edge + direction * tol_xi
        step = max(abs(outside - start), tol_xi)
        while r.objective(outside) <= t.epsilon_prime:
            evaluations += 1
            if math.isinf(outside) or abs(outside - start) > (r.guard[1] - r.guard[0]):
                raise UnboundedIntervalError(name, outside)
            step *= 2.0
            outside = start + direction * step
        evaluations += 1
        bound, used = _bisect(r.objective, start, outside, t.epsilon_prime, tol_xi, tol_h, h_start)
        evaluations += used
        bounds.append(bound)
    return CredibleInterval(bounds[0], bounds[1], "lasso-hybrid", evaluations)


@dataclass
class LCIMap:
    partition: SuperPixelPartition
    intervals: List[CredibleInterval] = field(default_factory=list)
    method: str = "bisection"

    @property
    def lower(self) -> np.ndarray:
        return np.array([iv.lower for iv in self.intervals])

    @property
    def upper(self) -> np.ndarray:
        return np.array([iv.upper for iv in self.intervals])

    @property
    def lengths(self) -> np.ndarray:
        return self.upper - self.lower

    def to_map(self, values: Optional[np.ndarray] = None) -> SphMap:
        """Region values (interval lengths by default) broadcast to their pixels; NaN elsewhere."""
        values = self.lengths if values is None else np.asarray(values)
        flat = np.full(self.partition.grid.size, np.nan)
        for region, value in zip(self.partition.regions, values):
            flat[region] = value
        return SphMap(self.partition.grid, 0, flat.reshape(self.partition.grid.shape))


def local_credible_interval(
    problem: ProblemSpec,
    x_map: Union[SphMap, np.ndarray],
    region: Region,
    t: CredibleThreshold,
    method: str = "bisection",
    component: str = "real",
) -> CredibleInterval:
    if method == "bisection":
        return lci_bisection(problem, x_map, region, t, component=component)
    if method == "gaussian-analytic":
        return lci_gaussian_analytic(lci_precompute(problem, x_map, region, component), t)
    if method == "lasso-hybrid":
        return lci_lasso(lci_precompute(problem, x_map, region, component), t, refine=True)
    raise InvalidParameterError(f"Unknown LCI method '{method}' (expected one of {LCI_METHODS}).")


def lci_map(
    problem: ProblemSpec,
    x_map: Union[SphMap, np.ndarray],
    partition: SuperPixelPartition,
    t: CredibleThreshold,
    method: str = "bisection",
    component: str = "real",
    workers: Optional[int] = None,
) -> LCIMap:
    """LCIs of every super pixel; regions are independent so ``workers`` > 1 uses a thread pool."""
    if method not in LCI_METHODS:
        raise InvalidParameterError(f"Unknown LCI method '{method}' (expected one of {LCI_METHODS}).")

    def one(index: int) -> CredibleInterval:
        return local_credible_interval(problem, x_map, partition.regions[index], t, method, component)

    indices = range(len(partition))
    if workers is not None and workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            intervals = list(pool.map(one, indices))
    else:
        intervals = [one(i) for i in indices]
    logger.info("computed %d %s intervals", len(intervals), method)
    return LCIMap(partition, intervals, method)
