"""Command-line interface: train / predict / evaluate / synth / benchmark.

Exit codes: 0 ok, 2 usage error, 3 data error, 4 numeric failure.  Every
artifact embeds the resolved configuration for provenance, and identical
(config, seed, inputs) produce identical outputs.
"""

from __future__ import annotations

import argparse
import json
import sys

import numpy as np

from .data import DataError, Dataset, SynthSpec, load_csv, synth
from .ep import EpConfig, fit_ep
from .kernels import KernelSpec
from .numerics import FactorizationError
from .predict import nlpd, predict, rmse, rvm_predictive_dist
from .rvm import RvmConfig, RvmModel, fit_rvm
from .serialize import SchemaError, load_model, save_model
from .vi import VIConfig, fit_vi

__all__ = ["main", "run"]


def _kernel_from_args(args) -> KernelSpec:
    return KernelSpec(family=args.kernel, lengthscale=args.lengthscale,
                      degree=args.degree, include_bias=not args.no_bias)


def _fit(method, data, kernel, args):
    if method == "rvm":
        return fit_rvm(data, kernel, RvmConfig(
            max_iter=args.max_iter, tol=args.tol,
            alpha_threshold=args.alpha_threshold))
    if method == "vi":
        return fit_vi(data, kernel, VIConfig(
            max_iter=args.max_iter, tol=args.tol,
            alpha_threshold=args.alpha_threshold, seed=args.seed))
    if method == "ep":
        return fit_ep(data, kernel, EpConfig(
            max_passes=args.max_iter, tol=args.tol,
            alpha_threshold=args.alpha_threshold, damping=args.damping,
            seed=args.seed))
    raise ValueError(f"unknown method {method!r}")


def _predictive(model, X):
    if isinstance(model, RvmModel):
        return rvm_predictive_dist(model, X)
    return predict(model, X)


def _resolved(args) -> dict:
    return {k: v for k, v in sorted(vars(args).items()) if k != "func"}


def _cmd_synth(args):
    spec = SynthSpec(generator=args.generator, n=args.n, seed=args.seed,
                     sigma=args.sigma)
    data, sd = synth(spec)
    with open(args.out, "w", encoding="utf-8") as fh:
        cols = [f"x{i}" for i in range(data.q)]
        fh.write(",".join(cols + ["y"]) + "\n")
        for row, yi in zip(data.X, data.y):
            fh.write(",".join(repr(float(v)) for v in row)
                     + f",{float(yi)!r}\n")
    if args.noise_out:
        with open(args.noise_out, "w", encoding="utf-8") as fh:
            fh.write("noise_sd\n")
            for v in sd:
                fh.write(f"{float(v)!r}\n")
    return 0


def _cmd_train(args):
    data = load_csv(args.data, has_header=not args.no_header,
                    target_column=args.target)
    model = _fit(args.method, data, _kernel_from_args(args), args)
    save_model(model, args.out)
    if args.verbose:
        print(f"trained method={args.method} status={model.status} "
              f"active={len(model.active_indices)} iters={model.n_iter}")
    return 0


def _cmd_predict(args):
    model = load_model(args.model)
    data = load_csv(args.data, has_header=not args.no_header,
                    target_column=args.target)
    pred = _predictive(model, data.X)
    header = ["x" + str(i) for i in range(data.q)]
    header += ["y_true", "pred_mean", "pred_sd_total", "pred_sd_latent",
               "noise_sd"]
    with open(args.out, "w", encoding="utf-8") as fh:
        fh.write("# " + json.dumps(_resolved(args), sort_keys=True) + "\n")
        fh.write("\t".join(header) + "\n")
        noise_var = pred.total_var - pred.latent_var
        for i in range(data.n):
            cells = [repr(float(v)) for v in data.X[i]]
            cells += [repr(float(data.y[i])),
                      repr(float(pred.latent_mean[i])),
                      repr(float(np.sqrt(pred.total_var[i]))),
                      repr(float(np.sqrt(pred.latent_var[i]))),
                      repr(float(np.sqrt(noise_var[i])))]
            fh.write("\t".join(cells) + "\n")
    return 0


def _cmd_evaluate(args):
    model = load_model(args.model)
    data = load_csv(args.data, has_header=not args.no_header,
                    target_column=args.target)
    pred = _predictive(model, data.X)
    lines = [
        "format_version=1",
        "config=" + json.dumps(_resolved(args), sort_keys=True),
        f"rmse={rmse(pred.latent_mean, data.y)!r}",
        f"nlpd={nlpd(pred, data.y)!r}",
        f"active_basis={len(model.active_indices)}",
        f"status={model.status}",
    ]
    text = "\n".join(lines) + "\n"
    if args.report:
        with open(args.report, "w", encoding="utf-8") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)
    return 0


def _cmd_benchmark(args):
    methods = [m.strip() for m in args.methods.split(",") if m.strip()]
    rows = []
    for seed in range(args.seeds):
        train, _ = synth(SynthSpec(generator=args.generator, n=args.n,
                                   seed=seed, sigma=args.sigma))
        test, _ = synth(SynthSpec(generator=args.generator, n=args.n,
                                  seed=seed + 10_000, sigma=args.sigma))
        for method in methods:
            model = _fit(method, train, _kernel_from_args(args), args)
            pred = _predictive(model, test.X)
            rows.append((method, seed, rmse(pred.latent_mean, test.y),
                         nlpd(pred, test.y), len(model.active_indices)))
    out_lines = ["format_version=1",
                 "config=" + json.dumps(_resolved(args), sort_keys=True),
                 "method\tseed\trmse\tnlpd\tactive_basis"]
    for method, seed, r, nl, nb in rows:
        out_lines.append(f"{method}\t{seed}\t{r!r}\t{nl!r}\t{nb}")
    text = "\n".join(out_lines) + "\n"
    if args.report:
        with open(args.report, "w", encoding="utf-8") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)
    return 0


def _add_common_model_opts(p):
    p.add_argument("--kernel", default="rbf",
                   choices=["rbf", "linear", "polynomial"])
    p.add_argument("--lengthscale", type=float, default=1.0)
    p.add_argument("--degree", type=int, default=3)
    p.add_argument("--no-bias", action="store_true")
    p.add_argument("--max-iter", type=int, default=200)
    p.add_argument("--tol", type=float, default=1e-6)
    p.add_argument("--alpha-threshold", type=float, default=1e12)
    p.add_argument("--damping", type=float, default=0.8)
    p.add_argument("--seed", type=int, default=0)


def _add_data_opts(p):
    p.add_argument("--data", required=True)
    p.add_argument("--target", default=None)
    p.add_argument("--no-header", action="store_true")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="hetrvm",
        description="Sparse kernel regression with input-dependent noise.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate a synthetic dataset CSV")
    p.add_argument("--generator", default="goldberg_sine",
                   choices=["goldberg_sine", "linear_het", "const_noise"])
    p.add_argument("--n", type=int, default=100)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--sigma", type=float, default=0.3)
    p.add_argument("--out", required=True)
    p.add_argument("--noise-out", default=None)
    p.set_defaults(func=_cmd_synth)

    p = sub.add_parser("train", help="fit a model and write it to JSON")
    p.add_argument("--method", required=True, choices=["rvm", "vi", "ep"])
    _add_data_opts(p)
    p.add_argument("--out", required=True)
    p.add_argument("--verbose", action="store_true")
    _add_common_model_opts(p)
    p.set_defaults(func=_cmd_train)

    p = sub.add_parser("predict", help="emit a prediction TSV")
    p.add_argument("--model", required=True)
    _add_data_opts(p)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_predict)

    p = sub.add_parser("evaluate", help="report RMSE / NLPD / basis count")
    p.add_argument("--model", required=True)
    _add_data_opts(p)
    p.add_argument("--report", default=None)
    p.set_defaults(func=_cmd_evaluate)

    p = sub.add_parser("benchmark",
                       help="compare methods over seeds on synthetic data")
    p.add_argument("--generator", default="goldberg_sine",
                   choices=["goldberg_sine", "linear_het", "const_noise"])
    p.add_argument("--n", type=int, default=100)
    p.add_argument("--seeds", type=int, default=5)
    p.add_argument("--sigma", type=float, default=0.3)
    p.add_argument("--methods", default="rvm,vi,ep")
    p.add_argument("--report", default=None)
    _add_common_model_opts(p)
    p.set_defaults(func=_cmd_benchmark)
    return parser


def run(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return 2 if exc.code not in (0, None) else 0
    try:
        return args.func(args)
    except (DataError, SchemaError, OSError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return 3
    except (FactorizationError, FloatingPointError, np.linalg.LinAlgError,
            ValueError) as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return 4


def main() -> None:
    sys.exit(run())
