"""Command-line front end: ``gencond gen|cond|estimate|experiment``.

Exit codes: 0 on success, 1 on numerical or generation failure, 2 on I/O,
validation or parameter errors.
"""

from __future__ import annotations

import argparse
import json
import logging
import math
import os
import sys

import numpy as np

from . import __version__
from .condition import (
    build_v_matrix,
    exact_condition_numbers,
    gram_spectral_norm,
    normwise_from_v_norm,
    upper_bounds,
)
from .errors import (
    CapacityError,
    DegenerateOutputError,
    GenerationFailure,
    NumericalFailure,
)
from .estimators import (
    EstimatorConfig,
    estimate_mixed_componentwise_ssce,
    estimate_normwise_probabilistic,
    estimate_normwise_ssce,
)
from .experiment import (
    SEED_ENV,
    load_config,
    rows_to_csv,
    run_experiment,
    summary_json,
    with_overrides,
    write_outputs,
)
from .geninv import RELAXED, build_bundle, load_archive, save_archive
from .testgen import ARITHMETIC, GEOMETRIC, GenSpec, generate

log = logging.getLogger("gencond")

EXIT_OK = 0
EXIT_NUMERICAL = 1
EXIT_INPUT = 2


def _seed(flag: int | None, default: int = 0) -> int:
    """An explicit ``--seed`` wins, then ``GENCOND_SEED``, then ``default``."""
    if flag is not None:
        return flag
    env = os.environ.get(SEED_ENV)
    return int(env) if env else default


def _emit(report: dict, fmt: str) -> None:
    if fmt == "json":
        clean = {k: (None if isinstance(v, float) and not math.isfinite(v) else v) for k, v in report.items()}
        print(json.dumps(clean, separators=(",", ":")))
    else:
        sys.stdout.write(rows_to_csv([report], list(report)))


def cmd_gen(args) -> int:
    spec = GenSpec(
        args.p, args.q, args.n, args.s, args.l1, args.l2,
        sv_mode=args.sv_mode, kappa_H=args.kappa_H, seed=_seed(args.seed),
    )  # fmt: skip
    try:
        gen = generate(spec, args.stream)
    except GenerationFailure as exc:
        print(f"error: {exc}", file=sys.stderr)
        print(json.dumps(spec.as_dict()), file=sys.stderr)
        return EXIT_NUMERICAL
    extra = {"spec": spec.as_dict(), "stream": args.stream}
    save_archive(args.out, gen.pair, extra)
    report = {
        "out": str(args.out),
        "kappa_A": gen.kappa_A,
        "kappa_C": gen.kappa_C,
        "kappa_L22_target": spec.kappa_L22,
        "kappa_C_target": spec.kappa_K11,
        "attempts": gen.attempts,
    }
    _emit(report, args.format)
    return EXIT_OK


def _load_bundle(args):
    pair = load_archive(args.archive, RELAXED if args.relaxed else None)
    return build_bundle(pair)


def cmd_cond(args) -> int:
    bundle = _load_bundle(args)
    want_exact = args.exact or args.all
    want_bounds = args.bounds or args.all
    want_kf = args.kron_free or args.all
    if not (want_exact or want_bounds or want_kf):
        want_exact = True
    report: dict = {}
    exact = None
    if want_exact or want_bounds:
        exact = exact_condition_numbers(bundle, method=args.method)
    if want_exact:
        report.update(exact.as_dict())
    if want_bounds:
        bounds = upper_bounds(bundle)
        report.update(bounds.as_dict())
        report["r1"] = bounds.n_upper / exact.normwise
        report["r2"] = bounds.m_upper / exact.mixed
        report["r3"] = bounds.c_upper / exact.componentwise
    if want_kf:
        report["normwise_kron_free"] = normwise_from_v_norm(bundle, gram_spectral_norm(bundle))
        closed = float(np.linalg.eigvalsh(build_v_matrix(bundle))[-1])
        report["normwise_closed_form"] = normwise_from_v_norm(bundle, closed)
    if args.all:
        ref = exact.normwise
        report["rel_diff_kron_free"] = abs(report["normwise_kron_free"] - ref) / ref
        report["rel_diff_closed_form"] = abs(report["normwise_closed_form"] - ref) / ref
        for name, res in bundle.identity_residuals().items():
            report[f"residual_{name}"] = res
    _emit(report, args.format)
    return EXIT_OK


def cmd_estimate(args) -> int:
    bundle = _load_bundle(args)
    cfg = EstimatorConfig(
        delta=args.delta, epsilon=args.epsilon, k=args.k, seed=_seed(args.seed), max_iter=args.max_iter
    )
    report: dict = {"alg": args.alg}
    if args.alg == 1:
        est = estimate_normwise_probabilistic(bundle, cfg, form=args.form)
        report.update(
            normwise_est=est.value,
            alpha1=est.alpha1,
            alpha2=est.alpha2,
            iterations=est.iterations,
            converged=est.converged,
        )
        if not est.converged:
            print("warning: Lanczos bracket did not converge", file=sys.stderr)
    elif args.alg == 2:
        report["normwise_est"] = estimate_normwise_ssce(bundle, cfg, form=args.form)
    else:
        report["mixed_est"], report["componentwise_est"] = estimate_mixed_componentwise_ssce(bundle, cfg)
    if args.with_exact:
        exact = exact_condition_numbers(bundle, method=args.method)
        report.update(exact.as_dict())
        if args.alg in (1, 2):
            report["ratio"] = report["normwise_est"] / exact.normwise
        else:
            report["ratio_mixed"] = report["mixed_est"] / exact.mixed
            report["ratio_componentwise"] = report["componentwise_est"] / exact.componentwise
    _emit(report, args.format)
    return EXIT_OK


def cmd_experiment(args) -> int:
    cfg = load_config(args.config)
    cfg = with_overrides(cfg, workers=args.workers, trials=args.trials, out=args.out)
    result = run_experiment(cfg)
    if cfg.out:
        rows_path, summ_path = write_outputs(result, cfg.out)
        log.info("wrote %s and %s", rows_path, summ_path)
    else:
        sys.stdout.write(result.to_csv())
    print(summary_json(result))
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="gencond", description=__doc__.splitlines()[0])
    ap.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)

    g = sub.add_parser("gen", help="generate a problem archive")
    g.add_argument("--p", type=int, required=True)
    g.add_argument("--q", type=int, required=True)
    g.add_argument("--n", type=int, required=True)
    g.add_argument("--s", type=int, required=True)
    g.add_argument("--l1", type=float, default=1.0)
    g.add_argument("--l2", type=float, default=0.0)
    g.add_argument("--kappa-H", dest="kappa_H", type=float, default=10.0)
    g.add_argument("--sv-mode", choices=(GEOMETRIC, ARITHMETIC), default=GEOMETRIC)
    g.add_argument("--seed", type=int, default=None)
    g.add_argument("--stream", type=int, default=0)
    g.add_argument("--out", required=True)
    g.set_defaults(func=cmd_gen)

    def archive_args(sp):
        sp.add_argument("archive")
        sp.add_argument("--relaxed", action="store_true", help="report instead of rejecting invalid pairs")
        sp.add_argument("--method", choices=("auto", "dense", "svd", "iterative"), default="auto")

    c = sub.add_parser("cond", help="condition numbers of an archived pair")
    archive_args(c)
    c.add_argument("--exact", action="store_true")
    c.add_argument("--bounds", action="store_true")
    c.add_argument("--kron-free", dest="kron_free", action="store_true")
    c.add_argument("--all", action="store_true")
    c.set_defaults(func=cmd_cond)

    e = sub.add_parser("estimate", help="statistical condition estimates")
    archive_args(e)
    e.add_argument("--alg", type=int, choices=(1, 2, 3), required=True)
    e.add_argument("--k", type=int, default=3)
    e.add_argument("--delta", type=float, default=0.01)
    e.add_argument("--epsilon", type=float, default=0.001)
    e.add_argument("--seed", type=int, default=None)
    e.add_argument("--max-iter", dest="max_iter", type=int, default=None)
    e.add_argument("--form", choices=("gram", "closed", "printed"), default="gram")
    e.add_argument("--with-exact", dest="with_exact", action="store_true")
    e.set_defaults(func=cmd_estimate)

    x = sub.add_parser("experiment", help="run a ratio experiment from a config file")
    x.add_argument("config")
    x.add_argument("--workers", type=int, default=None)
    x.add_argument("--trials", type=int, default=None)
    x.add_argument("--out", default=None)
    x.set_defaults(func=cmd_experiment)

    for sp in (g, c, e):
        sp.add_argument("--format", choices=("json", "csv"), default="json")
    return ap


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s"
    )
    try:
        return args.func(args)
    except (NumericalFailure, DegenerateOutputError, CapacityError, GenerationFailure, np.linalg.LinAlgError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except (OSError, ValueError, KeyError) as exc:
        # ParameterError, ShapeError and InvalidProblemError are ValueErrors
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
