"""Experiment drivers: synthetic completion sweeps, step-size sweeps and image
inpainting. Each writes plot-ready CSV files into an output directory.

CSV files use ',' separators, '.' decimals and LF line endings. Timing
columns (``*seconds``) are the only nondeterministic fields.
"""

from __future__ import annotations

import csv
import json
import logging
import math
import statistics
import time
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence, Tuple

from .images import (
    best_nrank_preprocess,
    image_to_tensor,
    load_sample_image,
    read_ppm,
    tensor_to_image,
    write_ppm,
)
from .problems import make_instance, nrmse, rel_err, sample_omega
from .solver import DivergenceError, SolverConfig, SolverResult, solve_fixed_rank, solve_heuristic_rank

logger = logging.getLogger(__name__)

KINDS = ("synthetic", "tau_sweep", "image")
SOLVERS = ("ihtr", "iht", "both")
SVD_CHOICES = ("auto", "exact", "sketch")

_KIND_DEFAULTS: Dict[str, Dict[str, Any]] = {
    "synthetic": {"shape": (20, 30, 40), "ranks": (2, 2, 2), "sr": (0.6,)},
    "tau_sweep": {"shape": (20, 20, 30, 30), "ranks": (4, 4, 4, 4), "sr": (0.3, 0.6)},
    "image": {"shape": None, "ranks": (30, 30, 3), "sr": (0.3,)},
}
_DEFAULT_XI = {"synthetic": 1e-2, "tau_sweep": 1e-2, "image": 1e-4}


@dataclass
class ExperimentSpec:
    """One experiment. ``None`` fields take kind-specific defaults in
    :meth:`resolved`.

    ``svd="auto"`` follows the usual protocol: column sketching for
    noiseless synthetic problems, exact SVD for noisy ones and for images.
    """

    kind: str = "synthetic"
    shape: Optional[Tuple[int, ...]] = None
    ranks: Optional[Tuple[int, ...]] = None
    sr: Optional[Tuple[float, ...]] = None
    sigma: float = 0.0
    tau: float = 1.4
    taus: Tuple[float, ...] = (0.1, 0.4, 0.7, 1.0, 1.4)
    solver: str = "both"
    svd: str = "auto"
    xi: Optional[float] = None
    tol: float = 1e-8
    max_iter: int = 5000
    weights: Optional[Tuple[float, ...]] = None
    trials: int = 10
    seed: int = 0
    out: str = "results"
    image: Optional[str] = None
    sweeps: int = 10

    def resolved(self) -> "ExperimentSpec":
        if self.kind not in KINDS:
            raise ValueError(f"kind: expected one of {KINDS}, got {self.kind!r}")
        spec = ExperimentSpec(**asdict(self))
        defaults = _KIND_DEFAULTS[spec.kind]
        for key in ("shape", "ranks", "sr"):
            if getattr(spec, key) is None:
                setattr(spec, key, defaults[key])
        if isinstance(spec.sr, (int, float)):
            spec.sr = (float(spec.sr),)
        if isinstance(spec.taus, (int, float)):
            spec.taus = (float(spec.taus),)
        if spec.xi is None:
            spec.xi = _DEFAULT_XI[spec.kind]
        spec.validate()
        return spec

    def validate(self) -> None:
        if self.solver not in SOLVERS:
            raise ValueError(f"solver: expected one of {SOLVERS}, got {self.solver!r}")
        if self.svd not in SVD_CHOICES:
            raise ValueError(f"svd: expected one of {SVD_CHOICES}, got {self.svd!r}")
        if self.trials < 1:
            raise ValueError(f"trials: must be >= 1, got {self.trials}")
        if not self.sr or any(not 0 < s <= 1 for s in self.sr):
            raise ValueError(f"sr: every sampling ratio must lie in (0, 1], got {self.sr}")
        if self.sigma < 0:
            raise ValueError(f"sigma: must be >= 0, got {self.sigma}")
        if self.kind == "tau_sweep":
            if not self.taus:
                raise ValueError("taus: tau list must be nonempty for a tau sweep")
            if any(not 0 < t <= 1.5 for t in self.taus):
                raise ValueError(f"taus: every tau must lie in (0, 1.5], got {self.taus}")
        if self.kind != "image" and (self.shape is None or len(self.shape) != len(self.ranks)):
            raise ValueError(f"ranks: {self.ranks} does not match shape {self.shape}")

    def solvers(self) -> List[str]:
        return ["ihtr", "iht"] if self.solver == "both" else [self.solver]

    def solver_config(self, tau: float, seed: int, noisy_data: bool) -> SolverConfig:
        svd = self.svd
        if svd == "auto":
            svd = "exact" if noisy_data else "sketch"
        return SolverConfig(
            tau=tau,
            weights=self.weights,
            tol=self.tol,
            max_iter=self.max_iter,
            svd=svd,
            sketch_seed=seed,
            xi=self.xi,
        )


@dataclass
class ExperimentSummary:
    rows: List[Dict[str, Any]] = field(default_factory=list)
    trials: List[Dict[str, Any]] = field(default_factory=list)


def _fmt(value) -> str:
    if isinstance(value, float):
        return repr(value)
    return str(value)


def _write_csv(path: Path, header: Sequence[str], rows: Sequence[Dict[str, Any]]) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow([_fmt(row[h]) for h in header])


def _dims(values: Sequence) -> str:
    return "x".join(str(v) for v in values)


def _run_solver(name: str, op, b, ranks, cfg: SolverConfig) -> SolverResult:
    if name == "ihtr":
        return solve_fixed_rank(op, b, ranks, cfg)
    return solve_heuristic_rank(op, b, cfg)


def _mean(values: List[float]) -> float:
    return statistics.fmean(values) if values else math.nan


TRIAL_HEADER = ["setting", "solver", "trial", "seed", "iterations", "converged", "metric",
                "value", "final_rank", "seconds"]
SUMMARY_HEADER = ["setting", "solver", "mean_iter", "mean_metric", "mean_seconds",
                  "metric", "trials", "failures"]


def _trial_block(spec, setting, instances, tau, noisy, out_dir, write_traces=True):
    """Run every solver on every instance; return (summary rows, trial rows)."""
    summary, trial_rows = [], []
    metric = "nrmse" if noisy else "rel_err"
    for name in spec.solvers():
        iters, values, secs, failures = [], [], [], 0
        for t, inst in enumerate(instances):
            seed = spec.seed + t
            cfg = spec.solver_config(tau, seed, noisy)
            start = time.perf_counter()
            try:
                res = _run_solver(name, inst.operator, inst.b, spec.ranks, cfg)
            except DivergenceError as exc:
                logger.warning("%s %s trial %d diverged: %s", setting, name, t, exc)
                failures += 1
                trial_rows.append({
                    "setting": setting, "solver": name, "trial": t, "seed": seed,
                    "iterations": "", "converged": "diverged", "metric": metric,
                    "value": "", "final_rank": "", "seconds": time.perf_counter() - start,
                })
                continue
            elapsed = time.perf_counter() - start
            if noisy:
                value = nrmse(res.solution, inst.ground_truth, inst.operator)
            else:
                value = rel_err(res.solution, inst.ground_truth)
            iters.append(res.iterations)
            values.append(value)
            secs.append(elapsed)
            trial_rows.append({
                "setting": setting, "solver": name, "trial": t, "seed": seed,
                "iterations": res.iterations, "converged": res.converged, "metric": metric,
                "value": value, "final_rank": _dims(res.final_rank), "seconds": elapsed,
            })
            if write_traces:
                res.trace.to_csv(out_dir / "traces" / f"{setting}_{name}_trial{t}.csv", res.status)
            logger.info("%s %s trial %d: %d iterations, %s=%.3e", setting, name, t,
                        res.iterations, metric, value)
        summary.append({
            "setting": setting, "solver": name, "mean_iter": _mean([float(i) for i in iters]),
            "mean_metric": _mean(values), "mean_seconds": _mean(secs), "metric": metric,
            "trials": len(values), "failures": failures,
        })
    return summary, trial_rows


def run_synthetic(spec: ExperimentSpec) -> ExperimentSummary:
    """Random completion problems; trial ``t`` uses seed ``spec.seed + t``.

    Writes ``summary.csv``, ``trials.csv`` and ``traces/<setting>_<solver>_trial<t>.csv``.
    """
    spec = spec.resolved()
    out_dir = Path(spec.out)
    result = ExperimentSummary()
    noisy = spec.sigma > 0
    for sr in spec.sr:
        setting = f"{_dims(spec.shape)}_r{_dims(spec.ranks)}_sr{sr:g}_sigma{spec.sigma:g}"
        instances = [make_instance(spec.shape, spec.ranks, sr, spec.sigma, spec.seed + t)
                     for t in range(spec.trials)]
        rows, trials = _trial_block(spec, setting, instances, spec.tau, noisy, out_dir)
        result.rows.extend(rows)
        result.trials.extend(trials)
    _write_csv(out_dir / "summary.csv", SUMMARY_HEADER, result.rows)
    _write_csv(out_dir / "trials.csv", TRIAL_HEADER, result.trials)
    return result


TAU_HEADER = ["sr", "solver", "tau", "mean_iter", "mean_rel_err", "mean_seconds", "trials", "failures"]


def run_tau_sweep(spec: ExperimentSpec) -> ExperimentSummary:
    """Step-size study: every ``tau`` in ``spec.taus`` on the same instances.

    Writes ``tau_sweep.csv`` and ``trials.csv``. Divergent runs are counted
    in ``failures`` and excluded from the means.
    """
    spec = spec.resolved()
    out_dir = Path(spec.out)
    result = ExperimentSummary()
    for sr in spec.sr:
        instances = [make_instance(spec.shape, spec.ranks, sr, spec.sigma, spec.seed + t)
                     for t in range(spec.trials)]
        for tau in spec.taus:
            setting = f"{_dims(spec.shape)}_r{_dims(spec.ranks)}_sr{sr:g}_tau{tau:g}"
            rows, trials = _trial_block(spec, setting, instances, tau, spec.sigma > 0, out_dir,
                                        write_traces=False)
            for row in rows:
                result.rows.append({
                    "sr": sr, "solver": row["solver"], "tau": tau, "mean_iter": row["mean_iter"],
                    "mean_rel_err": row["mean_metric"], "mean_seconds": row["mean_seconds"],
                    "trials": row["trials"], "failures": row["failures"],
                })
            result.trials.extend(trials)
    _write_csv(out_dir / "tau_sweep.csv", TAU_HEADER, result.rows)
    _write_csv(out_dir / "trials.csv", TRIAL_HEADER, result.trials)
    return result


IMAGE_HEADER = ["solver", "sr", "iterations", "converged", "rel_err", "final_rank", "seconds"]


def run_image(spec: ExperimentSpec) -> ExperimentSummary:
    """Inpainting: preprocess to a low n-rank image, mask, recover.

    Writes ``target.ppm`` (the low n-rank image), ``observed.ppm`` (missing
    pixels black), ``recovered_<solver>.ppm``, ``image_metrics.csv`` and
    per-solver traces.
    """
    spec = spec.resolved()
    out_dir = Path(spec.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    pixels = read_ppm(spec.image) if spec.image else load_sample_image()
    target = best_nrank_preprocess(image_to_tensor(pixels), spec.ranks, spec.sweeps)
    write_ppm(out_dir / "target.ppm", tensor_to_image(target))
    result = ExperimentSummary()
    for sr in spec.sr:
        op = sample_omega(target.shape, sr, spec.seed)
        if len(op) == 0:
            raise ValueError(f"sampling ratio {sr} observes no pixels")
        b = op.apply(target)
        write_ppm(out_dir / f"observed_sr{sr:g}.ppm", tensor_to_image(op.adjoint(b)))
        for name in spec.solvers():
            cfg = spec.solver_config(spec.tau, spec.seed, noisy_data=True)
            start = time.perf_counter()
            res = _run_solver(name, op, b, spec.ranks, cfg)
            elapsed = time.perf_counter() - start
            err = rel_err(res.solution, target)
            write_ppm(out_dir / f"recovered_{name}_sr{sr:g}.ppm", tensor_to_image(res.solution))
            res.trace.to_csv(out_dir / "traces" / f"image_{name}_sr{sr:g}.csv", res.status)
            result.rows.append({
                "solver": name, "sr": sr, "iterations": res.iterations,
                "converged": res.converged, "rel_err": err,
                "final_rank": _dims(res.final_rank), "seconds": elapsed,
            })
            logger.info("image %s sr=%g: %d iterations, rel_err=%.3e", name, sr, res.iterations, err)
    _write_csv(out_dir / "image_metrics.csv", IMAGE_HEADER, result.rows)
    return result


RUNNERS = {"synthetic": run_synthetic, "tau_sweep": run_tau_sweep, "image": run_image}


def run(spec: ExperimentSpec) -> ExperimentSummary:
    return RUNNERS[spec.kind](spec)


# -- config -----------------------------------------------------------------

_TUPLE_INT = {"shape", "ranks"}
_TUPLE_FLOAT = {"sr", "taus", "weights"}
_FLOAT = {"sigma", "tau", "xi", "tol"}
_INT = {"max_iter", "trials", "seed", "sweeps"}
_STR = {"kind", "solver", "svd", "out", "image"}


def spec_fields() -> List[str]:
    return [f.name for f in fields(ExperimentSpec)]


def parse_field(key: str, value: Any) -> Any:
    """Coerce a config or command-line value for field ``key``.

    Sequences may be given as lists or as strings separated by ',' or 'x'.
    Errors name the offending field.
    """
    if key not in spec_fields():
        raise KeyError(f"unknown config key {key!r}")
    if value is None:
        return None
    try:
        if key in _TUPLE_INT or key in _TUPLE_FLOAT:
            conv = int if key in _TUPLE_INT else float
            if isinstance(value, str):
                parts = [p for p in value.replace("x", ",").split(",") if p.strip()]
            elif isinstance(value, (list, tuple)):
                parts = list(value)
            else:
                parts = [value]
            if conv is int and any(isinstance(p, float) and not p.is_integer() for p in parts):
                raise ValueError("non-integer entry")
            return tuple(conv(p) for p in parts)
        if key in _FLOAT:
            if isinstance(value, bool):
                raise ValueError("boolean given")
            return float(value)
        if key in _INT:
            if isinstance(value, bool) or (isinstance(value, float) and not value.is_integer()):
                raise ValueError("non-integer value")
            return int(value)
        return str(value)
    except (TypeError, ValueError) as exc:
        raise ValueError(f"{key}: cannot parse {value!r} ({exc})") from None


def load_config(path) -> Dict[str, Any]:
    """Read a JSON object of experiment fields, rejecting unknown keys."""
    with open(path) as fh:
        raw = json.load(fh)
    if not isinstance(raw, dict):
        raise ValueError(f"{path}: config must be a JSON object")
    return {key: parse_field(key, value) for key, value in raw.items()}


def build_spec(config: Optional[Dict[str, Any]] = None, overrides: Optional[Dict[str, Any]] = None) -> ExperimentSpec:
    """Defaults, then config-file values, then command-line overrides."""
    values: Dict[str, Any] = {}
    for source in (config or {}, overrides or {}):
        for key, value in source.items():
            values[key] = parse_field(key, value)
    return ExperimentSpec(**values)
