from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Any, Dict, Iterable, Optional, Tuple

import yaml

from .exceptions import ConfigError

SCENARIOS = ("topography", "camera360", "cmb-wiener", "weak-lensing")
MASK_KINDS = ("random", "band", "file")
PARTITION_KINDS = ("rectangular", "cap")

# setting, regularizer, domain
SCENARIO_DEFAULTS = {
    "topography": ("analysis", "wavelet-l1", "real"),
    "camera360": ("analysis", "tv", "real"),
    "cmb-wiener": ("synthesis", "l2-squared", "complex"),
    "weak-lensing": ("analysis", "wavelet-l1", "real"),
}


@dataclass(frozen=True)
class MaskConfig:
    kind: str = "random"
    fraction: float = 0.0
    band: Tuple[float, float] = (0.0, 0.0)
    file: Optional[str] = None


@dataclass(frozen=True)
class WaveletConfig:
    dilation: float = 2.0
    J0: int = 0
    N: int = 1


@dataclass(frozen=True)
class SolverConfig:
    max_iter: int = 2000
    tol: float = 1e-6
    objective_tol: float = 1e-8
    accelerate: bool = True
    rho: float = 1.0


@dataclass(frozen=True)
class UQConfig:
    alpha: float = 0.01
    partition: str = "rectangular"
    blocks: Tuple[int, int] = (4, 8)
    radius: float = 0.2
    centers: Tuple[Tuple[float, float], ...] = ()
    method: str = "bisection"
    workers: int = 1
    feature: Optional[Tuple[int, int, int, int]] = None


@dataclass(frozen=True)
class ExperimentConfig:
    scenario: str
    L: int = 32
    snr_db: Optional[float] = 30.0
    sigma: Optional[float] = None
    mask: MaskConfig = field(default_factory=MaskConfig)
    beam_fwhm: Optional[float] = None
    formulation: str = "unconstrained"
    setting: str = "analysis"
    algorithm: str = "forward-backward"
    regularizer: str = "wavelet-l1"
    p: float = 1.0
    lam: Optional[float] = None
    delta: Optional[float] = None
    auto_lambda: bool = True
    bandlimit: bool = False
    domain: str = "real"
    wavelet: WaveletConfig = field(default_factory=WaveletConfig)
    solver: SolverConfig = field(default_factory=SolverConfig)
    uq: Optional[UQConfig] = None
    cl_file: Optional[str] = None
    observations: Optional[str] = None
    seed: int = 0
    output_dir: str = "out"
    render_width: int = 512


TOP_LEVEL_KEYS = (
    "scenario", "L", "snr_db", "sigma", "mask", "beam_fwhm", "formulation", "setting", "algorithm",
    "regularizer", "p", "lam", "delta", "auto_lambda", "bandlimit", "domain", "wavelet", "solver", "uq",
    "cl_file", "observations", "seed", "output_dir", "render_width",
)


def load_config(path: str) -> Dict[str, Any]:
    """Read a JSON or YAML experiment file (JSON is a YAML subset)."""
    with open(path, "r", encoding="utf-8") as file:
        try:
            raw = yaml.safe_load(file)
        except yaml.YAMLError as exc:
            raise ConfigError(f"Failed to parse '{path}': {exc}") from exc
    if raw is None:
        raise ConfigError(f"Configuration file '{path}' is empty.")
    return raw


def _check_keys(section: Dict[str, Any], allowed: Iterable[str], path: str) -> None:
    unknown = sorted(set(section) - set(allowed))
    if unknown:
        where = f"'{path}'" if path else "the configuration root"
        raise ConfigError(f"Unknown key(s) in {where}: {', '.join(unknown)}.")


def _section(raw: Dict[str, Any], key: str) -> Dict[str, Any]:
    section = raw.get(key)
    if section is None:
        return {}
    if not isinstance(section, dict):
        raise ConfigError(f"'{key}' section must be a mapping (dict).")
    return section


def _is_number(value: Any) -> bool:
    return isinstance(value, (int, float)) and not isinstance(value, bool) and math.isfinite(value)


def _is_int(value: Any) -> bool:
    return isinstance(value, int) and not isinstance(value, bool)


def _choice(value: Any, options: Tuple[str, ...], path: str) -> str:
    if value not in options:
        raise ConfigError(f"{path} must be one of: {', '.join(options)}.")
    return value


def _validate_mask(section: Dict[str, Any]) -> MaskConfig:
    _check_keys(section, ("kind", "fraction", "band", "file"), "mask")
    kind = _choice(section.get("kind", "random"), MASK_KINDS, "mask.kind")
    fraction = section.get("fraction", 0.0)
    if not _is_number(fraction) or not 0.0 <= fraction < 1.0:
        raise ConfigError("mask.fraction must be a number in [0, 1).")
    band = section.get("band", [0.0, 0.0])
    if not isinstance(band, (list, tuple)) or len(band) != 2 or not all(_is_number(b) for b in band):
        raise ConfigError("mask.band must be a pair [theta_min, theta_max] in radians.")
    if kind == "band" and not 0.0 <= band[0] < band[1] <= math.pi:
        raise ConfigError("mask.band must satisfy 0 <= theta_min < theta_max <= pi.")
    file = section.get("file")
    if kind == "file" and (not isinstance(file, str) or not file.strip()):
        raise ConfigError("mask.file must name an S2MAP file when mask.kind is 'file'.")
    return MaskConfig(kind, float(fraction), (float(band[0]), float(band[1])), file)


def _validate_wavelet(section: Dict[str, Any]) -> WaveletConfig:
    _check_keys(section, ("dilation", "J0", "N"), "wavelet")
    dilation = section.get("dilation", 2.0)
    if not _is_number(dilation) or dilation <= 1.0:
        raise ConfigError("wavelet.dilation must be a number > 1.")
    J0 = section.get("J0", 0)
    if not _is_int(J0) or J0 < 0:
        raise ConfigError("wavelet.J0 must be a non-negative integer.")
    N = section.get("N", 1)
    if not _is_int(N) or N < 1:
        raise ConfigError("wavelet.N must be a positive integer.")
    return WaveletConfig(float(dilation), J0, N)


def _validate_solver(section: Dict[str, Any]) -> SolverConfig:
    _check_keys(section, ("max_iter", "tol", "objective_tol", "accelerate", "rho"), "solver")
    max_iter = section.get("max_iter", 2000)
    if not _is_int(max_iter) or max_iter < 1:
        raise ConfigError("solver.max_iter must be a positive integer.")
    for key, default in (("tol", 1e-6), ("objective_tol", 1e-8), ("rho", 1.0)):
        value = section.get(key, default)
        if not _is_number(value) or value <= 0.0:
            raise ConfigError(f"solver.{key} must be a positive number.")
    accelerate = section.get("accelerate", True)
    if not isinstance(accelerate, bool):
        raise ConfigError("solver.accelerate must be true or false.")
    return SolverConfig(
        max_iter,
        float(section.get("tol", 1e-6)),
        float(section.get("objective_tol", 1e-8)),
        accelerate,
        float(section.get("rho", 1.0)),
    )


def _validate_uq(section: Dict[str, Any]) -> UQConfig:
    _check_keys(section, ("alpha", "partition", "blocks", "radius", "centers", "method", "workers", "feature"), "uq")
    alpha = section.get("alpha", 0.01)
    if not _is_number(alpha) or not 0.0 < alpha < 1.0:
        raise ConfigError("uq.alpha must be in (0, 1).")
    partition = _choice(section.get("partition", "rectangular"), PARTITION_KINDS, "uq.partition")
    blocks = section.get("blocks", [4, 8])
    if not isinstance(blocks, (list, tuple)) or len(blocks) != 2 or not all(_is_int(b) and b > 0 for b in blocks):
        raise ConfigError("uq.blocks must be a pair of positive integers [n_theta_blocks, n_phi_blocks].")
    radius = section.get("radius", 0.2)
    if not _is_number(radius) or not 0.0 <= radius <= math.pi:
        raise ConfigError("uq.radius must be in [0, pi].")
    centers = section.get("centers", [])
    if not isinstance(centers, list) or any(
        not isinstance(c, (list, tuple)) or len(c) != 2 or not all(_is_number(v) for v in c) for c in centers
    ):
        raise ConfigError("uq.centers must be a list of [theta, phi] pairs.")
    if partition == "cap" and not centers:
        raise ConfigError("uq.centers is required for cap partitions.")
    method = _choice(section.get("method", "bisection"), ("bisection", "gaussian-analytic", "lasso-hybrid"), "uq.method")
    workers = section.get("workers", 1)
    if not _is_int(workers) or workers < 1:
        raise ConfigError("uq.workers must be a positive integer.")
    feature = section.get("feature")
    if feature is not None and (
        not isinstance(feature, (list, tuple)) or len(feature) != 4 or not all(_is_int(v) and v >= 0 for v in feature)
    ):
        raise ConfigError("uq.feature must be [ring_start, ring_stop, column_start, column_stop].")
    return UQConfig(
        float(alpha),
        partition,
        (blocks[0], blocks[1]),
        float(radius),
        tuple((float(t), float(p)) for t, p in centers),
        method,
        workers,
        tuple(feature) if feature is not None else None,
    )


def _optional_number(raw: Dict[str, Any], key: str, positive: bool = False) -> Optional[float]:
    value = raw.get(key)
    if value is None:
        return None
    if not _is_number(value) or (positive and value <= 0.0) or value < 0.0:
        raise ConfigError(f"{key} must be a {'positive' if positive else 'non-negative'} number.")
    return float(value)


def validate_config(raw: Any) -> ExperimentConfig:
    if not isinstance(raw, dict):
        raise ConfigError("Configuration root must be a mapping (dict).")
    _check_keys(raw, TOP_LEVEL_KEYS, "")

    if "scenario" not in raw:
        raise ConfigError("Missing required 'scenario' (topography | camera360 | cmb-wiener | weak-lensing).")
    scenario = _choice(raw["scenario"], SCENARIOS, "scenario")
    default_setting, default_regularizer, default_domain = SCENARIO_DEFAULTS[scenario]

    L = raw.get("L", 32)
    if not _is_int(L) or L < 2:
        raise ConfigError("L must be an integer >= 2.")
    if scenario == "weak-lensing" and L < 3:
        raise ConfigError("L must be >= 3 for the weak-lensing scenario.")

    snr_db = raw.get("snr_db", 30.0)
    if snr_db is not None and not _is_number(snr_db):
        raise ConfigError("snr_db must be a number.")
    sigma = _optional_number(raw, "sigma")
    beam_fwhm = _optional_number(raw, "beam_fwhm", positive=True)

    formulation = _choice(raw.get("formulation", "unconstrained"), ("unconstrained", "constrained"), "formulation")
    setting = _choice(raw.get("setting", default_setting), ("analysis", "synthesis"), "setting")
    algorithm = _choice(
        raw.get("algorithm", "forward-backward"), ("forward-backward", "primal-dual", "admm"), "algorithm"
    )
    regularizer = _choice(
        raw.get("regularizer", default_regularizer), ("weighted-lp", "wavelet-l1", "tv", "l2-squared"), "regularizer"
    )
    domain = _choice(raw.get("domain", default_domain), ("complex", "real", "real-nonnegative"), "domain")
    p = raw.get("p", 1.0)
    if not _is_number(p) or p < 1.0:
        raise ConfigError("p must be a number >= 1.")

    if regularizer == "weighted-lp" and p != 1.0:
        raise ConfigError("p must be 1 for 'weighted-lp' (use 'l2-squared' for a Gaussian prior).")
    if setting == "synthesis" and regularizer == "tv":
        raise ConfigError("regularizer 'tv' is only available in the analysis setting.")
    if scenario == "cmb-wiener" and setting != "synthesis":
        raise ConfigError("The cmb-wiener scenario solves for whitened coefficients; setting must be 'synthesis'.")
    if formulation == "constrained" and algorithm == "forward-backward":
        raise ConfigError("forward-backward solves the unconstrained formulation; use primal-dual or admm.")

    lam = _optional_number(raw, "lam")
    delta = _optional_number(raw, "delta", positive=True)
    if formulation == "constrained" and lam is not None:
        raise ConfigError("lam applies to the unconstrained formulation only; use delta.")
    if formulation == "unconstrained" and delta is not None:
        raise ConfigError("delta applies to the constrained formulation only; use lam.")
    auto_lambda = raw.get("auto_lambda", lam is None)
    if not isinstance(auto_lambda, bool):
        raise ConfigError("auto_lambda must be true or false.")
    if formulation == "unconstrained" and lam is None and not auto_lambda:
        raise ConfigError("lam is required when auto_lambda is false.")

    bandlimit = raw.get("bandlimit", False)
    if not isinstance(bandlimit, bool):
        raise ConfigError("bandlimit must be true or false.")
    if bandlimit and setting != "analysis":
        raise ConfigError("bandlimit applies to the analysis setting only.")

    seed = raw.get("seed", 0)
    if not _is_int(seed) or not 0 <= seed < 2 ** 64:
        raise ConfigError("seed must be an unsigned 64-bit integer.")
    output_dir = raw.get("output_dir", "out")
    if not isinstance(output_dir, str) or not output_dir.strip():
        raise ConfigError("output_dir must be a non-empty string.")
    render_width = raw.get("render_width", 512)
    if not _is_int(render_width) or render_width < 8:
        raise ConfigError("render_width must be an integer >= 8.")
    for key in ("cl_file", "observations"):
        if raw.get(key) is not None and not isinstance(raw[key], str):
            raise ConfigError(f"{key} must be a file path.")

    uq = _validate_uq(_section(raw, "uq")) if raw.get("uq") is not None else None
    if uq is not None and uq.method == "gaussian-analytic" and regularizer != "l2-squared":
        raise ConfigError("uq.method 'gaussian-analytic' needs regularizer 'l2-squared'.")
    if uq is not None and uq.method == "lasso-hybrid" and regularizer not in ("wavelet-l1", "weighted-lp"):
        raise ConfigError("uq.method 'lasso-hybrid' needs an l1 regularizer.")

    return ExperimentConfig(
        scenario=scenario,
        L=L,
        snr_db=None if snr_db is None else float(snr_db),
        sigma=sigma,
        mask=_validate_mask(_section(raw, "mask")),
        beam_fwhm=beam_fwhm,
        formulation=formulation,
        setting=setting,
        algorithm=algorithm,
        regularizer=regularizer,
        p=float(p),
        lam=lam,
        delta=delta,
        auto_lambda=auto_lambda,
        bandlimit=bandlimit,
        domain=domain,
        wavelet=_validate_wavelet(_section(raw, "wavelet")),
        solver=_validate_solver(_section(raw, "solver")),
        uq=uq,
        cl_file=raw.get("cl_file"),
        observations=raw.get("observations"),
        seed=seed,
        output_dir=output_dir,
        render_width=render_width,
    )
