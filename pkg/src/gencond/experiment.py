"""Ratio experiments: exact values vs. upper bounds vs. statistical estimates.

One *cell* is a pair of exponents ``(l1, l2)``; each cell runs ``trials``
independent problems. Trial ``i`` of cell ``c`` draws from the random stream
``c * trials + i`` of the configured seed, so results do not depend on the
worker count or on completion order.
"""

from __future__ import annotations

import csv
import io
import json
import logging
import math
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .condition import exact_condition_numbers, upper_bounds
from .errors import GenCondError, ParameterError
from .estimators import (
    EstimatorConfig,
    estimate_mixed_componentwise_ssce,
    estimate_normwise_probabilistic,
    estimate_normwise_ssce,
)
from .geninv import DEFAULT_PD_TOL, build_bundle
from .testgen import GEOMETRIC, GenSpec, generate

log = logging.getLogger(__name__)

SEED_ENV = "GENCOND_SEED"

COLUMNS = [
    "cell", "l1", "l2", "trial", "stream",
    "kappa_A", "kappa_C",
    "normwise", "mixed", "componentwise",
    "n_upper", "m_upper", "c_upper",
    "r1", "r2", "r3",
    "est_p", "alpha1", "alpha2", "p_converged", "p_iterations",
    "est_s", "est_m", "est_c",
    "r_p", "r_s", "r_m", "r_c",
    "t", "t1", "t2", "t3", "t4",
    "t_p", "t_s", "t_m", "t_c",
    "error",
]  # fmt: skip

TIME_COLUMNS = ["t", "t1", "t2", "t3", "t4", "t_p", "t_s", "t_m", "t_c"]
RATIO_COLUMNS = ["r1", "r2", "r3", "r_p", "r_s", "r_m", "r_c", "t_p", "t_s", "t_m", "t_c"]


@dataclass(frozen=True)
class ExperimentConfig:
    p: int = 50
    q: int = 30
    n: int = 40
    s: int = 20
    l1: tuple[float, ...] = (1.0, 2.0, 3.0)
    l2: tuple[float, ...] = (0.0, 1.0, 2.0, 3.0)
    trials: int = 10
    seed: int = 0
    kappa_H: float = 10.0
    sv_mode: str = GEOMETRIC
    pd_tol: float = DEFAULT_PD_TOL
    norm_method: str = "iterative"
    estimators: bool = True
    estimator: EstimatorConfig = field(default_factory=EstimatorConfig)
    v_form: str = "gram"
    timing: bool = True
    workers: int = 1
    out: str | None = None

    def __post_init__(self):
        if self.trials < 1:
            raise ParameterError("trials must be >= 1")
        if self.workers < 1:
            raise ParameterError("workers must be >= 1")
        # validates the dimensions once, up front
        GenSpec(self.p, self.q, self.n, self.s, kappa_H=self.kappa_H, sv_mode=self.sv_mode)

    @property
    def cells(self) -> list[tuple[float, float]]:
        return [(a, b) for a in self.l1 for b in self.l2]


_INT_KEYS = {"p", "q", "n", "s", "trials", "seed", "workers", "k", "max_iter"}
_FLOAT_KEYS = {"kappa_h", "pd_tol", "delta", "epsilon"}
_LIST_KEYS = {"l1", "l2"}
_STR_KEYS = {"sv_mode", "norm_method", "v_form", "out"}
_BOOL_KEYS = {"estimators", "timing"}


def parse_config_text(text: str) -> dict[str, str]:
    """Flat ``key = value`` lines; ``#`` starts a comment."""
    out: dict[str, str] = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ParameterError(f"config line {lineno}: expected 'key = value', got {raw!r}")
        key, value = (t.strip() for t in line.split("=", 1))
        out[key.lower()] = value
    return out


def config_from_mapping(values: dict[str, str], env: dict[str, str] | None = None) -> ExperimentConfig:
    env = os.environ if env is None else env
    kw: dict = {}
    est: dict = {}
    for key, value in values.items():
        if key in _INT_KEYS:
            target = est if key in ("k", "max_iter") else kw
            target[key] = int(value)
        elif key in _FLOAT_KEYS:
            if key in ("delta", "epsilon"):
                est[key] = float(value)
            else:
                kw["kappa_H" if key == "kappa_h" else key] = float(value)
        elif key in _LIST_KEYS:
            kw[key] = tuple(float(t) for t in value.replace(",", " ").split())
        elif key in _STR_KEYS:
            kw[key] = value
        elif key in _BOOL_KEYS:
            kw[key] = value.lower() in ("1", "true", "yes", "on")
        else:
            raise ParameterError(f"unknown config key {key!r}")
    if env.get(SEED_ENV):
        kw["seed"] = int(env[SEED_ENV])
    seed = kw.get("seed", 0)
    kw["estimator"] = EstimatorConfig(seed=seed, **est)
    return ExperimentConfig(**kw)


def load_config(path: str | os.PathLike, env: dict[str, str] | None = None) -> ExperimentConfig:
    return config_from_mapping(parse_config_text(Path(path).read_text()), env)


# ---------------------------------------------------------------------------
# one trial


def _timed(fn, *args, **kwargs):
    t0 = time.perf_counter()
    out = fn(*args, **kwargs)
    return out, max(time.perf_counter() - t0, 1e-12)


def run_trial(cfg: ExperimentConfig, cell: int, trial: int) -> dict:
    l1, l2 = cfg.cells[cell]
    stream = cell * cfg.trials + trial
    row: dict = {c: math.nan for c in COLUMNS}
    row.update(cell=cell, l1=l1, l2=l2, trial=trial, stream=stream, error="")
    spec = GenSpec(
        cfg.p, cfg.q, cfg.n, cfg.s, l1, l2,
        sv_mode=cfg.sv_mode, kappa_H=cfg.kappa_H, seed=cfg.seed, pd_tol=cfg.pd_tol,
    )  # fmt: skip
    try:
        gen = generate(spec, stream)
        row["kappa_A"] = gen.kappa_A
        row["kappa_C"] = gen.kappa_C
        bundle, row["t"] = _timed(build_bundle, gen.pair, check=False)
        exact = exact_condition_numbers(bundle, method=cfg.norm_method)
        bounds = upper_bounds(bundle)
        row.update(exact.as_dict())
        row.update(bounds.as_dict())
        row["r1"] = bounds.n_upper / exact.normwise
        row["r2"] = bounds.m_upper / exact.mixed
        row["r3"] = bounds.c_upper / exact.componentwise
        if cfg.estimators:
            ecfg = cfg.estimator
            est, row["t1"] = _timed(
                estimate_normwise_probabilistic, bundle, ecfg, form=cfg.v_form, stream=stream
            )
            row.update(
                est_p=est.value,
                alpha1=est.alpha1,
                alpha2=est.alpha2,
                p_converged=int(est.converged),
                p_iterations=est.iterations,
            )
            row["est_s"], row["t2"] = _timed(
                estimate_normwise_ssce, bundle, ecfg, form=cfg.v_form, stream=stream
            )
            (row["est_m"], row["est_c"]), row["t3"] = _timed(
                estimate_mixed_componentwise_ssce, bundle, ecfg, stream=stream
            )
            # one pass of the mixed/componentwise estimator yields both numbers
            row["t4"] = row["t3"]
            row["r_p"] = row["est_p"] / exact.normwise
            row["r_s"] = row["est_s"] / exact.normwise
            row["r_m"] = row["est_m"] / exact.mixed
            row["r_c"] = row["est_c"] / exact.componentwise
            for src, dst in (("t1", "t_p"), ("t2", "t_s"), ("t3", "t_m"), ("t4", "t_c")):
                row[dst] = row[src] / row["t"]
    except (GenCondError, np.linalg.LinAlgError, ArithmeticError) as exc:
        log.warning("cell %d trial %d failed: %s", cell, trial, exc)
        row["error"] = f"{type(exc).__name__}: {exc}"
    if not cfg.timing:
        # wall times are the only nondeterministic columns
        for col in TIME_COLUMNS:
            row[col] = math.nan
    return row


def _run_task(args):
    cfg, cell, trial = args
    return run_trial(cfg, cell, trial)


@dataclass
class ExperimentResult:
    config: ExperimentConfig
    rows: list[dict]

    def summary(self) -> list[dict]:
        return summarize(self.rows, self.config.cells)

    def to_csv(self) -> str:
        return rows_to_csv(self.rows)

    def summary_csv(self) -> str:
        return summary_to_csv(self.summary())


def run_experiment(cfg: ExperimentConfig) -> ExperimentResult:
    tasks = [(cfg, c, t) for c in range(len(cfg.cells)) for t in range(cfg.trials)]
    if cfg.workers == 1:
        rows = [_run_task(t) for t in tasks]
    else:
        with ProcessPoolExecutor(max_workers=cfg.workers) as pool:
            # map preserves task order regardless of completion order
            rows = list(pool.map(_run_task, tasks, chunksize=max(1, len(tasks) // (4 * cfg.workers))))
    return ExperimentResult(cfg, rows)


# ---------------------------------------------------------------------------
# reporting


def format_value(v) -> str:
    if isinstance(v, str):
        return v
    if isinstance(v, (bool, np.bool_)):
        return str(int(v))
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if v is None or (isinstance(v, float) and math.isnan(v)):
        return ""
    return f"{float(v):.17g}"


def rows_to_csv(rows: list[dict], columns: list[str] = COLUMNS) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(columns)
    for r in rows:
        w.writerow([format_value(r.get(c, "")) for c in columns])
    return buf.getvalue()


def read_csv_rows(text: str) -> list[dict]:
    out = []
    for r in csv.DictReader(io.StringIO(text)):
        parsed = {}
        for k, v in r.items():
            if k == "error":
                parsed[k] = v
            else:
                parsed[k] = float(v) if v != "" else math.nan
        out.append(parsed)
    return out


def summarize(rows: list[dict], cells: list[tuple[float, float]]) -> list[dict]:
    """Per-cell mean and max of every ratio, plus the minimum of the bound ratios."""
    out = []
    for ci, (l1, l2) in enumerate(cells):
        sel = [r for r in rows if int(r["cell"]) == ci]
        entry: dict = {"cell": ci, "l1": l1, "l2": l2, "trials": len(sel)}
        entry["failures"] = sum(1 for r in sel if r.get("error"))
        for col in RATIO_COLUMNS:
            vals = np.array([float(r[col]) for r in sel], dtype=float)
            vals = vals[np.isfinite(vals)]
            entry[f"{col}_mean"] = float(np.mean(vals)) if vals.size else math.nan
            entry[f"{col}_max"] = float(np.max(vals)) if vals.size else math.nan
            if col in ("r1", "r2", "r3"):
                entry[f"{col}_min"] = float(np.min(vals)) if vals.size else math.nan
        out.append(entry)
    return out


def summary_to_csv(summary: list[dict]) -> str:
    if not summary:
        return ""
    return rows_to_csv(summary, list(summary[0].keys()))


def summary_json(result: ExperimentResult) -> str:
    summ = result.summary()

    def clean(d):
        return {k: (None if isinstance(v, float) and math.isnan(v) else v) for k, v in d.items()}

    cfg = result.config
    payload = {
        "dims": [cfg.p, cfg.q, cfg.n, cfg.s],
        "seed": cfg.seed,
        "trials": cfg.trials,
        "rows": len(result.rows),
        "failures": sum(1 for r in result.rows if r.get("error")),
        "cells": [clean(c) for c in summ],
    }
    return json.dumps(payload, separators=(",", ":"))


def write_outputs(result: ExperimentResult, out: str | os.PathLike) -> tuple[Path, Path]:
    path = Path(out)
    if path.suffix.lower() != ".csv":
        path.mkdir(parents=True, exist_ok=True)
        rows_path, summ_path = path / "trials.csv", path / "summary.csv"
    else:
        path.parent.mkdir(parents=True, exist_ok=True)
        rows_path, summ_path = path, path.with_name(path.stem + "_summary.csv")
    rows_path.write_text(result.to_csv())
    summ_path.write_text(result.summary_csv())
    return rows_path, summ_path


def with_overrides(cfg: ExperimentConfig, **kw) -> ExperimentConfig:
    return replace(cfg, **{k: v for k, v in kw.items() if v is not None})
