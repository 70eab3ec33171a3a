"""Command-line interface.

Subcommands:
  bench run       --config FILE [--set key=value ...] [--out DIR]
  stepsize table  --model ... --s ... --xi-grid ...
  grf sample      --model ... --dim ... --seed ... --points ...
  blue curve      --model ... --loss ... --grad ... --offsets ...

Exit codes: 0 success, 2 configuration error, 3 numeric failure.
"""

from __future__ import annotations

import argparse
import csv
import sys

import numpy as np

from .covariance import IsotropicModel, UnboundedDerivative
from .estimators import NoiseSpec, predict_curve
from .harness import ConfigError, parse_config_text, run_experiment
from .simulator import DegenerateCovariance, GrfSampler
from .stepsize import NoFiniteStep, NumericFailure, closed_form_step, numeric_step

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_NUMERIC = 3


def _model_from_args(args) -> IsotropicModel:
    kind = args.model
    if kind == "sqexp":
        return IsotropicModel.squared_exponential(args.variance, args.s)
    if kind == "matern":
        return IsotropicModel.matern(args.p, args.variance, args.s)
    if kind == "rq":
        return IsotropicModel.rational_quadratic(args.beta, args.variance,
                                                 args.s)
    if kind == "grq_variogram":
        return IsotropicModel.grq_variogram(args.beta)
    raise ConfigError(f"unknown model {kind!r}")


def _add_model_args(parser, default_model="sqexp"):
    parser.add_argument("--model", default=default_model,
                        choices=["sqexp", "matern", "rq", "grq_variogram"])
    parser.add_argument("--s", type=float, default=1.0,
                        help="length scale")
    parser.add_argument("--variance", type=float, default=1.0)
    parser.add_argument("--p", type=int, default=2,
                        help="Matern half-integer index")
    parser.add_argument("--beta", type=float, default=1.0,
                        help="rational-quadratic exponent")


def _parse_vector(text: str) -> np.ndarray:
    return np.array([float(x) for x in text.split(",") if x.strip()])


def _cmd_bench_run(args) -> int:
    overrides = {}
    for item in args.set or []:
        if "=" not in item:
            raise ConfigError(f"--set expects key=value, got {item!r}")
        key, value = item.split("=", 1)
        overrides[key.strip()] = value.strip()
    if args.dump_iterates:
        overrides["dump_iterates"] = "true"
    with open(args.config) as fh:
        config = parse_config_text(fh.read(), overrides)
    paths = run_experiment(config, output_dir=args.out)
    print(f"wrote {len(paths['trajectories'])} trajectories and summary to "
          f"{paths['summary'].parent}")
    return EXIT_OK


def _cmd_stepsize_table(args) -> int:
    model = _model_from_args(args)
    xis = [float(x) for x in args.xi_grid.split(",") if x.strip()]
    writer = csv.writer(sys.stdout)
    writer.writerow(["model", "s", "xi", "eta", "method", "eta_numeric"])
    for xi in xis:
        result = closed_form_step(model, xi)
        numeric = (numeric_step(model, xi).eta if model.is_covariance
                   else result.eta)
        writer.writerow([args.model, repr(args.s), repr(xi),
                         repr(result.eta), result.method, repr(numeric)])
    return EXIT_OK


def _cmd_grf_sample(args) -> int:
    model = _model_from_args(args)
    if args.points:
        points = [_parse_vector(p) for p in args.points.split(";") if p.strip()]
        dim = points[0].size
    else:
        dim = args.dim
        rng = np.random.default_rng(args.seed + 1)
        points = [rng.standard_normal(dim) * args.spread
                  for _ in range(args.n)]
    sampler = GrfSampler(model, dim, seed=args.seed, jitter=args.jitter,
                         mean=args.mean)
    writer = csv.writer(sys.stdout)
    writer.writerow([f"w_{i}" for i in range(dim)] + ["value"]
                    + [f"g_{i}" for i in range(dim)])
    for p in points:
        value, grad = sampler.eval(p)
        writer.writerow([repr(float(x)) for x in p] + [repr(value)]
                        + [repr(float(g)) for g in grad])
    return EXIT_OK


def _cmd_blue_curve(args) -> int:
    model = _model_from_args(args)
    grad = _parse_vector(args.grad)
    direction = (_parse_vector(args.direction) if args.direction
                 else np.eye(grad.size)[0])
    direction = direction / np.linalg.norm(direction)
    start, stop, count = (float(x) for x in args.offsets.split(":"))
    offsets = np.linspace(start, stop, int(count))
    noise = NoiseSpec(args.noise_value_var, args.noise_grad_var)
    w0 = np.zeros(grad.size)
    series = predict_curve(model, noise, args.mu, (w0, args.loss, grad),
                           offsets, direction)
    writer = csv.writer(sys.stdout)
    writer.writerow(["offset", "mean", "two_sigma"])
    for offset, mean, two_sigma in series:
        writer.writerow([repr(offset), repr(mean), repr(two_sigma)])
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="rfd",
        description="step-size tables, random-function simulation and "
                    "optimizer benchmarks")
    top = parser.add_subparsers(dest="group", required=True)

    bench = top.add_parser("bench", help="experiment runner")
    bench_sub = bench.add_subparsers(dest="cmd", required=True)
    bench_run = bench_sub.add_parser("run", help="run a config file")
    bench_run.add_argument("--config", required=True)
    bench_run.add_argument("--set", action="append", metavar="KEY=VALUE")
    bench_run.add_argument("--out", default=None)
    bench_run.add_argument("--dump-iterates", action="store_true")
    bench_run.set_defaults(func=_cmd_bench_run)

    stepsize = top.add_parser("stepsize", help="optimal step sizes")
    step_sub = stepsize.add_subparsers(dest="cmd", required=True)
    table = step_sub.add_parser("table", help="print step sizes on a xi grid")
    _add_model_args(table)
    table.add_argument("--xi-grid", default="0")
    table.set_defaults(func=_cmd_stepsize_table)

    grf = top.add_parser("grf", help="random-function simulator")
    grf_sub = grf.add_subparsers(dest="cmd", required=True)
    sample = grf_sub.add_parser("sample", help="draw (value, gradient) tuples")
    _add_model_args(sample)
    sample.add_argument("--dim", type=int, default=2)
    sample.add_argument("--seed", type=int, default=0)
    sample.add_argument("--mean", type=float, default=0.0)
    sample.add_argument("--jitter", type=float, default=None)
    sample.add_argument("--points", default=None,
                        help="semicolon-separated points, e.g. '0,0;1,0'")
    sample.add_argument("--n", type=int, default=5,
                        help="number of random points when --points is absent")
    sample.add_argument("--spread", type=float, default=1.0)
    sample.set_defaults(func=_cmd_grf_sample)

    blue = top.add_parser("blue", help="conditional prediction curves")
    blue_sub = blue.add_subparsers(dest="cmd", required=True)
    curve = blue_sub.add_parser("curve", help="mean and two-sigma band")
    _add_model_args(curve)
    curve.add_argument("--loss", type=float, required=True)
    curve.add_argument("--grad", required=True, help="comma-separated vector")
    curve.add_argument("--mu", type=float, default=0.0)
    curve.add_argument("--noise-value-var", type=float, default=0.0)
    curve.add_argument("--noise-grad-var", type=float, default=0.0)
    curve.add_argument("--direction", default=None)
    curve.add_argument("--offsets", default="-3:3:61",
                       help="start:stop:count")
    curve.set_defaults(func=_cmd_blue_curve)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (NumericFailure, NoFiniteStep, DegenerateCovariance,
            ArithmeticError) as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (ConfigError, FileNotFoundError, ValueError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


def entrypoint():
    sys.exit(main())


if __name__ == "__main__":
    sys.exit(main())
