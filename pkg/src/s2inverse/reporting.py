from __future__ import annotations

import dataclasses
import json
import math
import os
from typing import Any, Dict

import numpy as np

from .config import ExperimentConfig
from .runner import Reconstruction
from .uq import CredibleThreshold, HypothesisResult, LCIMap


def _jsonable(value: Any) -> Any:
    if isinstance(value, dict):
        return {str(k): _jsonable(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_jsonable(v) for v in value]
    if isinstance(value, np.generic):
        value = value.item()
    if isinstance(value, np.ndarray):
        return _jsonable(value.tolist())
    if isinstance(value, complex):
        return [value.real, value.imag]
    if isinstance(value, float) and not math.isfinite(value):
        return None
    return value


def settings_summary(cfg: ExperimentConfig) -> Dict[str, Any]:
    return dataclasses.asdict(cfg)


def run_summary(run: Reconstruction) -> Dict[str, Any]:
    result = run.result
    summary = {
        "scenario": run.config.scenario,
        "settings": settings_summary(run.config),
        "snr_db": run.snr_db,
        "input_snr_db": run.input_snr_db,
        "iterations": result.iterations,
        "converged": result.converged,
        "wall_time_s": run.wall_time,
        "lambda": result.lam,
        "lambda_trace": result.lam_trace,
        "objective_trace": result.objective,
        "sigma": run.problem.sigma,
        "measurements": int(run.simulation.M),
        "operator_calls": result.operator_calls,
    }
    if run.problem.formulation == "constrained":
        summary["feasibility"] = {
            "fidelity": run.fidelity,
            "delta": run.problem.delta,
            "satisfied": run.feasible,
        }
    return summary


def threshold_summary(threshold: CredibleThreshold) -> Dict[str, Any]:
    return dataclasses.asdict(threshold)


def lci_summary(intervals: LCIMap, threshold: CredibleThreshold) -> Dict[str, Any]:
    lengths = intervals.lengths
    return {
        "method": intervals.method,
        "partition": intervals.partition.kind,
        "regions": len(intervals.partition),
        "threshold": threshold_summary(threshold),
        "length": {
            "mean": float(np.mean(lengths)),
            "median": float(np.median(lengths)),
            "min": float(np.min(lengths)),
            "max": float(np.max(lengths)),
        },
        "evaluations": sum(iv.evaluations for iv in intervals.intervals),
        "operator_calls": sum(iv.operator_calls for iv in intervals.intervals),
        "intervals": [[iv.lower, iv.upper] for iv in intervals.intervals],
    }


def hypothesis_summary(outcome: HypothesisResult) -> Dict[str, Any]:
    return {
        "verdict": outcome.verdict,
        "objective": outcome.objective,
        "threshold": threshold_summary(outcome.threshold),
    }


def write_summary(path: str, payload: Dict[str, Any], verbose: bool = False) -> str:
    os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
    with open(path, "w", encoding="utf-8") as file:
        json.dump(_jsonable(payload), file, indent=2, sort_keys=True)
        file.write("\n")
    if verbose:
        print(f"Wrote summary: {path}")
    return path

