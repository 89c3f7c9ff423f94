import argparse
import dataclasses
import logging
import os
import sys
from typing import Callable, Dict, List, Optional

if __name__ == "__main__" and __package__ is None:
    sys.path.append(os.path.dirname(os.path.dirname(os.path.abspath(__file__))))
    __package__ = "s2inverse"

import numpy as np

from .__version__ import __version__
from .config import ExperimentConfig, WaveletConfig, load_config, validate_config
from .exceptions import ConfigError, DimensionError, FormatError, InvalidParameterError, NumericalError
from .mapio import read_map, write_map
from .render import render_mollweide
from .reporting import hypothesis_summary, lci_summary, run_summary, settings_summary, write_summary
from .runner import Reconstruction, reconstruct, run_hypothesis_test, run_lci
from .scenarios import simulate
from .sphere import HarmonicCoeffs, SphMap, make_grid, sht_forward, sht_inverse
from .ui import ANSI_CYAN, ANSI_GREEN, ANSI_RED, IterationProgress, bold, colorize, supports_ansi
from .wavelets import WaveletParams, build_kernels, wavelet_analysis, wavelet_synthesis

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_NUMERICAL = 3

TRANSFORM_KINDS = ("forward-sht", "inverse-sht", "wavelet", "wavelet-roundtrip")


def exit_with_error(message: str, exit_code: int = EXIT_CONFIG) -> None:
    if supports_ansi():
        print(colorize(bold(message), ANSI_RED), file=sys.stderr)
    else:
        print(message, file=sys.stderr)
    raise SystemExit(exit_code)


def build_argument_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="s2inverse",
        description="Simulate, reconstruct and quantify uncertainty for inverse problems on the sphere.",
        formatter_class=argparse.RawTextHelpFormatter,
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument(
        "-c",
        "--config",
        metavar="PATH",
        help="Experiment configuration (JSON or YAML).\nRequired by simulate, reconstruct, uq-lci and uq-test.",
    )
    parser.add_argument("--seed", type=int, metavar="U64", help="Override the configured seed.")
    parser.add_argument("-o", "--out", metavar="DIR", help="Override the configured output directory.")
    parser.add_argument(
        "-v",
        "--verbose",
        action="store_true",
        help="Log solver details (DEBUG level) instead of the inline progress line.",
    )

    commands = parser.add_subparsers(dest="command", metavar="COMMAND", required=True)
    commands.add_parser("simulate", help="Write ground truth, observations and mask.")
    commands.add_parser("reconstruct", help="Simulate, solve and report the SNR.")
    commands.add_parser("uq-lci", help="Reconstruct, then compute local credible intervals.")
    commands.add_parser("uq-test", help="Reconstruct, then test whether a feature is significant.")

    transform = commands.add_parser("transform", help="Apply a transform to a map file (debugging).")
    transform.add_argument("--input", required=True, metavar="FILE", help="Input S2MAP file.")
    transform.add_argument("--kind", required=True, choices=TRANSFORM_KINDS)
    transform.add_argument("--output", required=True, metavar="PATH", help="Output file, or directory for 'wavelet'.")

    render = commands.add_parser("render", help="Render a pixel map as a Mollweide PPM image.")
    render.add_argument("--input", required=True, metavar="FILE", help="Input S2MAP pixel map.")
    render.add_argument("--output", required=True, metavar="FILE", help="Output .ppm path.")
    render.add_argument("--vmin", type=float)
    render.add_argument("--vmax", type=float)
    render.add_argument("--width", type=int, default=512)
    render.add_argument("--cmap", default="viridis")
    return parser


def load_experiment(args: argparse.Namespace) -> ExperimentConfig:
    if not args.config:
        raise ConfigError(f"'{args.command}' needs --config.")
    try:
        raw = load_config(args.config)
    except OSError as exc:
        raise ConfigError(f"Failed to read '{args.config}': {exc.strerror or exc}") from exc
    cfg = validate_config(raw)
    overrides = {}
    if args.seed is not None:
        if not 0 <= args.seed < 2 ** 64:
            raise ConfigError("--seed must be an unsigned 64-bit integer.")
        overrides["seed"] = args.seed
    if args.out:
        overrides["output_dir"] = args.out
    return dataclasses.replace(cfg, **overrides) if overrides else cfg


def _out(cfg: ExperimentConfig, name: str) -> str:
    return os.path.join(cfg.output_dir, name)


def _reconstruct(cfg: ExperimentConfig, args: argparse.Namespace) -> Reconstruction:
    progress = None
    if not args.verbose and supports_ansi():
        progress = IterationProgress(f"{cfg.scenario} {cfg.algorithm}")
    run = reconstruct(cfg, callback=progress)
    if progress is not None:
        progress.finish(run.result.converged)
    write_map(_out(cfg, "solution.s2map"), run.estimate)
    write_summary(_out(cfg, "reconstruct.json"), run_summary(run), verbose=args.verbose)
    print(f"{bold('SNR')} {colorize(f'{run.snr_db:.2f} dB', ANSI_GREEN)} ({run.result.iterations} iterations)")
    return run


def cmd_simulate(args: argparse.Namespace) -> None:
    cfg = load_experiment(args)
    sim = simulate(cfg)
    write_map(_out(cfg, "truth.s2map"), sim.truth)
    write_map(_out(cfg, "observed.s2map"), sim.observed_map())
    write_map(_out(cfg, "mask.s2map"), SphMap(sim.grid, 0, sim.mask.keep.astype(np.float64)))
    summary = {"scenario": cfg.scenario, "settings": settings_summary(cfg), "sigma": sim.sigma, "measurements": sim.M}
    write_summary(_out(cfg, "simulate.json"), summary, verbose=args.verbose)
    print(f"{bold('simulated')} {cfg.scenario}: M={sim.M}, sigma={sim.sigma:.4g} -> {cfg.output_dir}")


def _write_lci(cfg: ExperimentConfig, run: Reconstruction, verbose: bool) -> None:
    intervals, threshold = run_lci(run)
    write_map(_out(cfg, "lci_length.s2map"), intervals.to_map())
    write_map(_out(cfg, "lci_lower.s2map"), intervals.to_map(intervals.lower))
    write_map(_out(cfg, "lci_upper.s2map"), intervals.to_map(intervals.upper))
    summary = lci_summary(intervals, threshold)
    write_summary(_out(cfg, "uq_lci.json"), summary, verbose=verbose)
    print(f"{bold('LCI')} {len(intervals.partition)} regions, mean length {summary['length']['mean']:.4g}")


def cmd_reconstruct(args: argparse.Namespace) -> None:
    cfg = load_experiment(args)
    run = _reconstruct(cfg, args)
    if cfg.uq is not None and cfg.formulation == "unconstrained":
        _write_lci(cfg, run, args.verbose)


def cmd_uq_lci(args: argparse.Namespace) -> None:
    cfg = load_experiment(args)
    _write_lci(cfg, _reconstruct(cfg, args), args.verbose)


def cmd_uq_test(args: argparse.Namespace) -> None:
    cfg = load_experiment(args)
    run = _reconstruct(cfg, args)
    outcome, surrogate = run_hypothesis_test(run)
    write_map(_out(cfg, "surrogate.s2map"), surrogate)
    write_summary(_out(cfg, "uq_test.json"), hypothesis_summary(outcome), verbose=args.verbose)
    color = ANSI_GREEN if outcome.significant else ANSI_CYAN
    print(f"{bold('feature')} {colorize(outcome.verdict, color)} "
          f"(h={outcome.objective:.6g}, threshold={outcome.threshold.epsilon_prime:.6g})")


def _wavelet_kernels(args: argparse.Namespace, L: int):
    wavelet = load_experiment(args).wavelet if args.config else WaveletConfig()
    return build_kernels(WaveletParams(L, wavelet.dilation, wavelet.J0, wavelet.N))


def cmd_transform(args: argparse.Namespace) -> None:
    source = read_map(args.input)
    if args.kind == "inverse-sht":
        if not isinstance(source, HarmonicCoeffs):
            raise InvalidParameterError("inverse-sht needs a harmonic-coefficient file.")
        write_map(args.output, sht_inverse(source, make_grid(source.L)))
        return
    if not isinstance(source, SphMap):
        raise InvalidParameterError(f"{args.kind} needs a pixel-map file.")
    if args.kind == "forward-sht":
        write_map(args.output, sht_forward(source))
        return
    kernels = _wavelet_kernels(args, source.grid.L)
    coeffs = wavelet_analysis(source, kernels)
    if args.kind == "wavelet":
        os.makedirs(args.output, exist_ok=True)
        write_map(os.path.join(args.output, "scaling.s2map"), coeffs.scaling)
        for j in range(coeffs.scales.shape[0]):
            for k in range(coeffs.scales.shape[1]):
                write_map(os.path.join(args.output, f"wavelet_j{j}_k{k}.s2map"), coeffs.slice_map(j, k))
        return
    restored = wavelet_synthesis(coeffs, kernels)
    write_map(args.output, restored)
    error = float(np.max(np.abs(restored.values - source.values)))
    print(f"{bold('round-trip')} max abs error {error:.3e}")


def cmd_render(args: argparse.Namespace) -> None:
    source = read_map(args.input)
    if not isinstance(source, SphMap):
        raise InvalidParameterError("render needs a pixel-map file.")
    if args.width < 8:
        raise InvalidParameterError("--width must be at least 8.")
    render_mollweide(source, args.output, args.vmin, args.vmax, args.width, args.cmap)
    print(f"{bold('rendered')} {args.output}")


COMMANDS: Dict[str, Callable[[argparse.Namespace], None]] = {
    "simulate": cmd_simulate,
    "reconstruct": cmd_reconstruct,
    "uq-lci": cmd_uq_lci,
    "uq-test": cmd_uq_test,
    "transform": cmd_transform,
    "render": cmd_render,
}


def main(argv: Optional[List[str]] = None) -> None:
    parser = build_argument_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
    )

    try:
        COMMANDS[args.command](args)
    except ConfigError as exc:
        exit_with_error(f"Configuration error in '{args.config}':\n{exc}", exit_code=EXIT_CONFIG)
    except (InvalidParameterError, DimensionError, FormatError) as exc:
        exit_with_error(f"Invalid input:\n{exc}", exit_code=EXIT_CONFIG)
    except NumericalError as exc:
        exit_with_error(f"Numerical failure:\n{exc}", exit_code=EXIT_NUMERICAL)
    except OSError as exc:
        exit_with_error(f"I/O error: {exc}", exit_code=EXIT_CONFIG)


if __name__ == "__main__":
    main()
