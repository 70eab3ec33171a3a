"""Experiment runner: config parsing, trajectory CSV I/O, run matrices.

Configs are flat ``key = value`` text files with ``#`` comments; every value
is overridable on the command line via ``--set key=value``.  Runs fan out
over seeds x optimizers to a small thread pool; each worker owns its sampler
and oracle and writes its own files, so outputs are byte-identical across
reruns regardless of scheduling.
"""

from __future__ import annotations

import csv
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .covariance import IsotropicModel, Kind
from .estimators import NoiseSpec
from .optimizers import (
    BaselineHyper,
    FunctionOracle,
    GrfOracle,
    OptimizerConfig,
    Trajectory,
    run,
    run_baseline,
)
from .simulator import GrfSampler

__all__ = [
    "ConfigError",
    "ExperimentConfig",
    "SimilarityMatrix",
    "toy_linear_loss",
    "grad_similarity",
    "run_experiment",
    "parse_config_text",
    "write_trajectory_csv",
    "read_trajectory_csv",
    "write_similarity_csv",
]

OUTPUT_DIR_ENV = "RFD_OUTPUT_DIR"

TRAJECTORY_HEADER = ["step", "loss_true", "loss_observed", "grad_norm",
                     "xi", "eta", "cos_prev_grad"]

_DESCENT_VARIANTS = ("rfd", "rfm_star", "conservative", "regularized")
_BASELINES = ("gd", "nesterov", "adam", "nadam")

_OPT_PARAMS = {
    "rfd": {"xi_ema": float},
    "rfm_star": {"xi_ema": float},
    "conservative": {"epsilon": float},
    "regularized": {"reg_var": float},
    "gd": {"lr": float},
    "nesterov": {"lr": float},
    "adam": {"lr": float, "beta1": float, "beta2": float, "eps": float},
    "nadam": {"lr": float, "beta1": float, "beta2": float, "eps": float},
}


class ConfigError(ValueError):
    """Invalid experiment configuration."""


def _parse_bool(s: str) -> bool:
    if s.lower() in ("true", "1", "yes", "on"):
        return True
    if s.lower() in ("false", "0", "no", "off"):
        return False
    raise ConfigError(f"expected a boolean, got {s!r}")


_GLOBAL_KEYS = {
    "oracle": str,
    "model.kind": str,
    "model.variance": float,
    "model.length_scale": float,
    "model.smoothness": float,
    "dim": int,
    "steps": int,
    "mu": float,
    "w0": float,
    "jitter": float,
    "noise.value_var": float,
    "noise.grad_var": float,
    "independent_grad_noise": _parse_bool,
    "seeds": str,
    "optimizers": str,
    "output_dir": str,
    "workers": int,
    "dump_iterates": _parse_bool,
    "toy.m": int,
    "toy.sigma": float,
    "toy.sigma_eps": float,
}

_DEFAULTS = {
    "oracle": "grf",
    "model.kind": "sqexp",
    "model.variance": 1.0,
    "model.length_scale": 1.0,
    "mu": 0.0,
    "w0": 0.0,
    "noise.value_var": 0.0,
    "noise.grad_var": 0.0,
    "independent_grad_noise": False,
    "workers": 1,
    "dump_iterates": False,
    "toy.sigma": 1.0,
    "toy.sigma_eps": 0.0,
}


@dataclass(frozen=True)
class ExperimentConfig:
    """Validated, immutable experiment description."""

    model: IsotropicModel
    dim: int
    steps: int
    seeds: tuple[int, ...]
    optimizers: tuple[str, ...]
    mu: float = 0.0
    noise: NoiseSpec = NoiseSpec()
    oracle: str = "grf"
    w0: float = 0.0
    jitter: float | None = None
    independent_grad_noise: bool = False
    workers: int = 1
    dump_iterates: bool = False
    output_dir: str | None = None
    toy_m: int | None = None
    toy_sigma: float = 1.0
    toy_sigma_eps: float = 0.0
    opt_params: dict = field(default_factory=dict)
    resolved: tuple[tuple[str, str], ...] = ()

    def __post_init__(self):
        if self.dim < 1:
            raise ConfigError("dim must be >= 1")
        if self.steps < 1:
            raise ConfigError("steps must be >= 1")
        if not self.seeds:
            raise ConfigError("at least one seed required")
        if not self.optimizers:
            raise ConfigError("at least one optimizer required")
        for name in self.optimizers:
            if name not in _OPT_PARAMS:
                raise ConfigError(f"unknown optimizer {name!r}")
        if self.oracle not in ("grf", "toy_linear"):
            raise ConfigError(f"unknown oracle {self.oracle!r}")
        if self.oracle == "toy_linear" and (self.toy_m is None
                                            or self.toy_m < self.dim):
            raise ConfigError("toy_linear oracle requires toy.m >= dim")


def parse_config_text(text: str, overrides: dict[str, str] | None = None
                      ) -> ExperimentConfig:
    raw: dict[str, str] = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value'")
        key, value = (part.strip() for part in line.split("=", 1))
        raw[key] = value
    if overrides:
        raw.update(overrides)
    return _build_config(raw)


def _build_config(raw: dict[str, str]) -> ExperimentConfig:
    optimizers = tuple(s.strip() for s in raw.get("optimizers", "").split(",")
                       if s.strip())
    known_opt_keys = {f"{name}.{param}": typ
                      for name in optimizers
                      for param, typ in _OPT_PARAMS.get(name, {}).items()}
    unknown = [k for k in raw
               if k not in _GLOBAL_KEYS and k not in known_opt_keys]
    if unknown:
        raise ConfigError("unknown config keys: " + ", ".join(sorted(unknown)))

    def get(key, default=None):
        if key in raw:
            try:
                return _GLOBAL_KEYS[key](raw[key])
            except ConfigError:
                raise
            except (TypeError, ValueError) as exc:
                raise ConfigError(f"bad value for {key}: {raw[key]!r}") from exc
        return _DEFAULTS.get(key, default)

    for key in ("dim", "steps", "seeds", "optimizers"):
        if key not in raw:
            raise ConfigError(f"missing required key {key!r}")
    try:
        seeds = tuple(int(s) for s in raw["seeds"].split(",") if s.strip())
    except ValueError as exc:
        raise ConfigError(f"bad seeds list {raw['seeds']!r}") from exc

    kind = get("model.kind")
    try:
        if kind == "grq_variogram":
            model = IsotropicModel.grq_variogram(get("model.smoothness", 1.0))
        elif kind == "matern":
            model = IsotropicModel.matern(int(get("model.smoothness", 2)),
                                          get("model.variance"),
                                          get("model.length_scale"))
        elif kind == "rq":
            model = IsotropicModel.rational_quadratic(
                get("model.smoothness", 1.0),
                get("model.variance"), get("model.length_scale"))
        elif kind == "sqexp":
            model = IsotropicModel.squared_exponential(
                get("model.variance"), get("model.length_scale"))
        else:
            raise ConfigError(f"unknown model.kind {kind!r}")
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc

    opt_params: dict[str, dict] = {}
    for name in optimizers:
        params = {}
        for param, typ in _OPT_PARAMS[name].items():
            key = f"{name}.{param}"
            if key in raw:
                try:
                    params[param] = typ(raw[key])
                except (TypeError, ValueError) as exc:
                    raise ConfigError(f"bad value for {key}") from exc
        opt_params[name] = params

    resolved = tuple(sorted((k, str(v)) for k, v in raw.items()))
    try:
        noise = NoiseSpec(get("noise.value_var"), get("noise.grad_var"))
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc

    return ExperimentConfig(
        model=model,
        dim=get("dim"),
        steps=get("steps"),
        seeds=seeds,
        optimizers=optimizers,
        mu=get("mu"),
        noise=noise,
        oracle=get("oracle"),
        w0=get("w0"),
        jitter=get("jitter"),
        independent_grad_noise=get("independent_grad_noise"),
        workers=max(1, get("workers")),
        dump_iterates=get("dump_iterates"),
        output_dir=get("output_dir"),
        toy_m=get("toy.m"),
        toy_sigma=get("toy.sigma"),
        toy_sigma_eps=get("toy.sigma_eps"),
        opt_params=opt_params,
        resolved=resolved,
    )


def toy_linear_loss(seed: int, dim: int, m: int, sigma: float,
                    sigma_eps: float) -> FunctionOracle:
    """Quadratic sample loss of a random linear regression problem.

    loss(w) = (sigma^2/m) (t1 - w)' t2 t2' (t1 - w) + sigma_eps^2 with
    standard-normal draws t1 (dim) and t2 (dim x m); the expectation over
    the draws is sigma^2 ||w||^2 + const, which is what the regularized
    variant assumes with reg_var = sigma^2.
    """
    if m < dim:
        raise ValueError("toy model needs m >= dim")
    rng = np.random.default_rng(seed)
    theta1 = rng.standard_normal(dim)
    theta2 = rng.standard_normal((dim, m))
    quad = (sigma ** 2 / m) * (theta2 @ theta2.T)

    def fn(w):
        r = theta1 - w
        return float(r @ quad @ r + sigma_eps ** 2), -2.0 * (quad @ r)

    oracle = FunctionOracle(fn, dim)
    oracle.theta1 = theta1
    oracle.quad = quad
    return oracle


@dataclass(frozen=True)
class SimilarityMatrix:
    """Normalized Gram matrix of a trajectory's gradients; rows belonging to
    zero gradients are NaN (missing)."""

    values: np.ndarray

    @property
    def n(self) -> int:
        return self.values.shape[0]

    def first_off_diagonal(self) -> np.ndarray:
        return np.diagonal(self.values, offset=1)


def grad_similarity(trajectory: Trajectory) -> SimilarityMatrix:
    grads = np.array(trajectory.gradients)
    norms = np.linalg.norm(grads, axis=1)
    with np.errstate(invalid="ignore", divide="ignore"):
        unit = grads / norms[:, None]
    mat = unit @ unit.T
    mat[norms == 0.0, :] = math.nan
    mat[:, norms == 0.0] = math.nan
    return SimilarityMatrix(values=mat)


def _fmt(x: float) -> str:
    if isinstance(x, float) and math.isnan(x):
        return ""
    return repr(float(x))


def write_trajectory_csv(traj: Trajectory, path, dump_iterates: bool = False):
    dim = traj.iterates[0].size if traj.iterates else 0
    header = list(TRAJECTORY_HEADER)
    if dump_iterates:
        header += [f"w_{i}" for i in range(dim)]
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for n in range(len(traj)):
            row = [str(n),
                   _fmt(traj.loss_true[n]),
                   _fmt(traj.loss_observed[n]),
                   _fmt(traj.grad_norms[n]),
                   _fmt(traj.xis[n]),
                   _fmt(traj.etas[n]),
                   _fmt(traj.cos_prev_grad[n])]
            if dump_iterates:
                row += [_fmt(x) for x in traj.iterates[n]]
            writer.writerow(row)


def read_trajectory_csv(path) -> dict[str, np.ndarray]:
    """Parse a trajectory CSV back into column arrays (empty fields -> NaN)."""
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        rows = list(reader)
    out: dict[str, np.ndarray] = {}
    for j, name in enumerate(header):
        if name == "step":
            out[name] = np.array([int(r[j]) for r in rows])
        else:
            out[name] = np.array([float(r[j]) if r[j] else math.nan
                                  for r in rows])
    if any(name.startswith("w_") for name in header):
        wcols = [name for name in header if name.startswith("w_")]
        out["iterates"] = np.column_stack([out[name] for name in wcols])
    return out


def write_similarity_csv(matrix: SimilarityMatrix, path):
    n = matrix.n
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow([""] + [str(i) for i in range(n)])
        for i in range(n):
            writer.writerow([str(i)] + [_fmt(x) for x in matrix.values[i]])


def _make_oracle(config: ExperimentConfig, seed: int):
    if config.oracle == "toy_linear":
        return toy_linear_loss(seed, config.dim, config.toy_m,
                               config.toy_sigma, config.toy_sigma_eps)
    sampler = GrfSampler(config.model, config.dim, seed=seed,
                         jitter=config.jitter, mean=config.mu)
    return GrfOracle(sampler, config.noise, noise_seed=seed,
                     independent_grad_noise=config.independent_grad_noise)


def _run_one(config: ExperimentConfig, name: str, seed: int) -> Trajectory:
    oracle = _make_oracle(config, seed)
    w0 = np.full(config.dim, config.w0)
    params = config.opt_params.get(name, {})
    if name in _BASELINES:
        if "lr" not in params:
            if name in ("adam", "nadam"):
                params = {"lr": 0.001, **params}
            else:
                raise ConfigError(f"{name} requires {name}.lr")
        return run_baseline(name, BaselineHyper(**params), oracle, w0,
                            config.steps)
    opt_config = OptimizerConfig(
        model=config.model, steps=config.steps, mu=config.mu,
        noise=config.noise, variant=name,
        xi_ema=params.get("xi_ema", 0.0),
        epsilon=params.get("epsilon", 0.5),
        reg_var=params.get("reg_var", 0.0),
    )
    return run(oracle, opt_config, w0)


def run_experiment(config: ExperimentConfig, output_dir=None) -> dict:
    """Run the full seeds x optimizers matrix and write all output files.

    Returns {"trajectories": {(name, seed): path}, "similarities": {...},
    "summary": path, "config": path, "results": {(name, seed): Trajectory}}.
    """
    out = Path(output_dir or config.output_dir
               or os.environ.get(OUTPUT_DIR_ENV, "rfd_out"))
    out.mkdir(parents=True, exist_ok=True)

    jobs = [(name, seed) for name in config.optimizers for seed in config.seeds]
    results: dict[tuple[str, int], Trajectory] = {}
    if config.workers > 1:
        with ThreadPoolExecutor(max_workers=config.workers) as pool:
            futures = {key: pool.submit(_run_one, config, *key) for key in jobs}
            for key, fut in futures.items():
                results[key] = fut.result()
    else:
        for key in jobs:
            results[key] = _run_one(config, *key)

    paths = {"trajectories": {}, "similarities": {}, "results": results}
    for (name, seed), traj in results.items():
        tpath = out / f"{name}_seed{seed}.csv"
        write_trajectory_csv(traj, tpath, dump_iterates=config.dump_iterates)
        spath = out / f"{name}_seed{seed}_similarity.csv"
        write_similarity_csv(grad_similarity(traj), spath)
        paths["trajectories"][(name, seed)] = tpath
        paths["similarities"][(name, seed)] = spath

    summary_path = out / "summary.csv"
    with open(summary_path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["optimizer", "step", "loss_mean", "loss_min",
                         "loss_max"])
        for name in config.optimizers:
            losses = np.array([results[(name, seed)].loss_true
                               for seed in config.seeds])
            for step in range(config.steps + 1):
                col = losses[:, step]
                writer.writerow([name, str(step), _fmt(col.mean()),
                                 _fmt(col.min()), _fmt(col.max())])
    paths["summary"] = summary_path

    config_path = out / "config_resolved.cfg"
    with open(config_path, "w") as fh:
        for key, value in config.resolved:
            fh.write(f"{key} = {value}\n")
    paths["config"] = config_path
    return paths
