"""Convex inverse problems and MAP uncertainty quantification on the sphere."""

from .__version__ import __version__
from .operators import LinearOperator, MaskSpec, compose, dot_test, operator_norm
from .priors import RegSpec
from .solvers import ProblemSpec, SolveResult, SolverOptions, admm, forward_backward, primal_dual, solve
from .sphere import HarmonicCoeffs, SphGrid, SphMap, make_grid, sht_forward, sht_inverse
from .uq import hpd_threshold, hypothesis_test, lci_bisection, lci_map
from .wavelets import WaveletParams, build_kernels, wavelet_analysis, wavelet_synthesis

__all__ = [
    "__version__",
    "HarmonicCoeffs",
    "LinearOperator",
    "MaskSpec",
    "ProblemSpec",
    "RegSpec",
    "SolveResult",
    "SolverOptions",
    "SphGrid",
    "SphMap",
    "WaveletParams",
    "admm",
    "build_kernels",
    "compose",
    "dot_test",
    "forward_backward",
    "hpd_threshold",
    "hypothesis_test",
    "lci_bisection",
    "lci_map",
    "make_grid",
    "operator_norm",
    "primal_dual",
    "sht_forward",
    "sht_inverse",
    "solve",
    "wavelet_analysis",
    "wavelet_synthesis",
]
