"""Command-line entry points.

Every subcommand reads a JSON config, writes its artifacts atomically into
--out, and finishes with a manifest (config hash, version, master seed,
timestamp). Reruns with identical config and seed reproduce every artifact
byte for byte; only the manifest's timestamp differs.

Exit codes: 0 success, 2 config/usage error, 3 divergence of a required
deterministic computation.
"""

from __future__ import annotations

import argparse
import csv
import json
import math
import os
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .harness import (
    Condition,
    EmpiricalObjective,
    SearchConfig,
    SearchReport,
    TheoryObjective,
    ToyObjective,
    coordinate_linesearch,
    cross_condition_matrix,
    evaluation_step,
    noise_characterization,
    pick_best_lrs,
    sample_search_shapes,
    search_step,
)
from .linreg import DescentConfig, DivergenceError, LinRegProblem, schedule_descent, simulate_empirical, solve_theory
from .persist import (
    OutputExistsError,
    export_schedule_csv,
    prepare_out_dir,
    read_json,
    write_csv,
    write_json,
    write_jsonl,
    write_manifest,
    write_schedule_json,
)
from .schedules import (
    FAMILIES,
    ScheduleSpec,
    ShapeError,
    base_lr_grid,
    eval_shape,
    fit_family_to_target,
    make_shape,
    schedule_lrs,
    shape_to_dict,
)
from .toy import OptimizerConfig, ToyWorkload

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_DIVERGED = 3

_MISSING = object()


class ConfigError(Exception):
    """Invalid or missing configuration; maps to exit code 2."""


# ---------------------------------------------------------------------------
# Config schema helpers
# ---------------------------------------------------------------------------


def _load_config(path) -> dict:
    try:
        with open(path, encoding="utf-8") as fh:
            cfg = json.load(fh)
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {path}") from None
    except json.JSONDecodeError as e:
        raise ConfigError(f"config file {path} is not valid JSON: {e}") from None
    if not isinstance(cfg, dict):
        raise ConfigError(f"config root must be a JSON object, got {type(cfg).__name__}")
    return cfg


def _check_keys(cfg: dict, allowed, where: str) -> None:
    unknown = sorted(set(cfg) - set(allowed))
    if unknown:
        raise ConfigError(f"{where}: unknown field {unknown[0]!r} (allowed: {', '.join(sorted(allowed))})")


def _get(cfg: dict, name: str, types, where: str, default=_MISSING):
    if name not in cfg:
        if default is _MISSING:
            raise ConfigError(f"{where}: missing required field {name!r}")
        return default
    v = cfg[name]
    if isinstance(v, bool) and bool not in (types if isinstance(types, tuple) else (types,)):
        raise ConfigError(f"{where}: field {name!r} must not be a boolean")
    if not isinstance(v, types):
        tn = types.__name__ if isinstance(types, type) else "/".join(t.__name__ for t in types)
        raise ConfigError(f"{where}: field {name!r} must be {tn}, got {type(v).__name__}")
    return v


def _int(cfg, name, where, default=_MISSING, lo=None, hi=None) -> int:
    if name not in cfg:
        if default is _MISSING:
            raise ConfigError(f"{where}: missing required field {name!r}")
        return default
    v = _get(cfg, name, int, where)
    if lo is not None and v < lo:
        raise ConfigError(f"{where}: field {name!r} must be >= {lo}, got {v}")
    if hi is not None and v > hi:
        raise ConfigError(f"{where}: field {name!r} must be <= {hi}, got {v}")
    return int(v)


def _float(cfg, name, where, default=_MISSING) -> float:
    if name not in cfg:
        if default is _MISSING:
            raise ConfigError(f"{where}: missing required field {name!r}")
        return default
    return float(_get(cfg, name, (int, float), where))


def _str(cfg, name, where, default=_MISSING, choices=None) -> str:
    if name not in cfg:
        if default is _MISSING:
            raise ConfigError(f"{where}: missing required field {name!r}")
        return default
    v = _get(cfg, name, str, where)
    if choices is not None and v not in choices:
        raise ConfigError(f"{where}: field {name!r} must be one of {sorted(choices)}, got {v!r}")
    return v


def _master_seed(cfg: dict, args, where: str, required: bool = True) -> int:
    if args.seed is not None:
        return args.seed
    if "master_seed" in cfg:
        return _int(cfg, "master_seed", where, lo=0)
    if required:
        raise ConfigError(f"{where}: missing required field 'master_seed' (or pass --seed)")
    return 0


def _threads_env() -> int | None:
    env = os.environ.get("LRSLAB_THREADS")
    if env is None:
        return None
    try:
        return int(env)
    except ValueError:
        raise ConfigError(f"LRSLAB_THREADS must be an integer, got {env!r}") from None


def _threads(args) -> int:
    n = args.threads
    if n is None:
        env = _threads_env()
        n = 1 if env is None else env
    if n < 0:
        raise ConfigError(f"--threads must be >= 0, got {n}")
    if n == 0:
        n = os.cpu_count() or 1
    return n


def _problem_from(cfg: dict, where: str) -> LinRegProblem:
    try:
        return LinRegProblem(
            dim=_int(cfg, "dim", where, lo=1),
            batch=_int(cfg, "batch", where, lo=1),
            horizon=_int(cfg, "horizon", where, lo=1),
        )
    except ValueError as e:
        raise ConfigError(f"{where}: {e}") from None


def _shape_from(cfg: dict, where: str):
    family = _str(cfg, "family", where, choices=set(FAMILIES))
    params = _get(cfg, "params", dict, where)
    try:
        return make_shape(family, **params)
    except (ShapeError, TypeError) as e:
        raise ConfigError(f"{where}: {e}") from None


def _schedule_lrs_from(cfg: dict, horizon: int, where: str) -> tuple[np.ndarray, dict]:
    """A per-step LR vector from one of the three schedule spellings."""
    block = _get(cfg, "schedule", dict, where)
    w = f"{where}.schedule"
    if "constant_lr" in block:
        _check_keys(block, {"constant_lr"}, w)
        lr = _float(block, "constant_lr", w)
        if lr < 0 or not math.isfinite(lr):
            raise ConfigError(f"{w}: field 'constant_lr' must be finite and >= 0, got {lr!r}")
        return np.full(horizon, lr), {"constant_lr": lr}
    if "lrs" in block:
        _check_keys(block, {"lrs"}, w)
        raw = _get(block, "lrs", list, w)
        arr = np.asarray(raw, dtype=float)
        if arr.shape != (horizon,):
            raise ConfigError(f"{w}: field 'lrs' must have length {horizon}, got {arr.shape[0]}")
        return arr, {"lrs": "explicit"}
    _check_keys(block, {"family", "params", "base_lr"}, w)
    shape = _shape_from(block, w)
    base_lr = _float(block, "base_lr", w)
    try:
        spec = ScheduleSpec(shape, base_lr, horizon)
    except ShapeError as e:
        raise ConfigError(f"{w}: {e}") from None
    return schedule_lrs(spec), {"schedule": shape_to_dict(shape), "base_lr": base_lr}


def _workload_from(cfg: dict, where: str) -> ToyWorkload:
    allowed = {
        "input_dim", "n_classes", "n_train", "hidden", "batch_size",
        "horizon", "data_seed", "center_scale",
    }
    _check_keys(cfg, allowed, where)
    kw = {}
    for name in ("input_dim", "n_classes", "n_train", "batch_size", "horizon", "data_seed"):
        if name in cfg:
            kw[name] = _int(cfg, name, where, lo=0 if name == "data_seed" else 1)
    if "hidden" in cfg:
        hidden = _get(cfg, "hidden", list, where)
        if not hidden or not all(isinstance(h, int) and not isinstance(h, bool) and h >= 1 for h in hidden):
            raise ConfigError(f"{where}: field 'hidden' must be a non-empty list of positive ints")
        kw["hidden"] = tuple(hidden)
    if "center_scale" in cfg:
        kw["center_scale"] = _float(cfg, "center_scale", where)
    try:
        return ToyWorkload(**kw)
    except ValueError as e:
        raise ConfigError(f"{where}: {e}") from None


def _optimizer_from(cfg: dict, where: str) -> OptimizerConfig:
    allowed = {"beta1", "beta2", "weight_decay", "epsilon"}
    _check_keys(cfg, allowed, where)
    kw = {name: _float(cfg, name, where) for name in allowed if name in cfg}
    try:
        return OptimizerConfig(**kw)
    except ValueError as e:
        raise ConfigError(f"{where}: {e}") from None


def _objective_from(cfg: dict, where: str):
    block = _get(cfg, "objective", dict, where)
    w = f"{where}.objective"
    kind = _str(block, "kind", w, choices={"theory", "empirical", "toy"})
    if kind in ("theory", "empirical"):
        _check_keys(block, {"kind", "dim", "batch", "horizon"}, w)
        problem = _problem_from(block, w)
        return TheoryObjective(problem) if kind == "theory" else EmpiricalObjective(problem)
    _check_keys(block, {"kind", "workload", "optimizer", "metric"}, w)
    workload = _workload_from(_get(block, "workload", dict, w, default={}), f"{w}.workload")
    opt = _optimizer_from(_get(block, "optimizer", dict, w, default={}), f"{w}.optimizer")
    metric = _str(block, "metric", w, default="loss", choices={"loss", "error"})
    return ToyObjective(workload, opt, metric)


def _search_config_from(cfg: dict, family: str, where: str) -> SearchConfig:
    kw = {"family": family}
    for name, lo in (("n_shapes", 1), ("k_search", 1), ("top_k", 1), ("n_init", 1), ("n_order", 1)):
        if name in cfg:
            kw[name] = _int(cfg, name, where, lo=lo)
    if "grid" in cfg:
        g = _get(cfg, "grid", dict, where)
        _check_keys(g, {"lo", "hi", "n"}, f"{where}.grid")
        kw["grid_lo"] = _float(g, "lo", f"{where}.grid")
        kw["grid_hi"] = _float(g, "hi", f"{where}.grid")
        kw["grid_n"] = _int(g, "n", f"{where}.grid", lo=2)
    if "eval_delta" in cfg:
        d = _float(cfg, "eval_delta", where)
        if not 0.0 < d < 1.0:
            raise ConfigError(f"{where}: field 'eval_delta' must be in (0, 1), got {d}")
        kw["eval_delta"] = d
    sc = SearchConfig(**kw)
    try:
        sc.grid()
    except ValueError as e:
        raise ConfigError(f"{where}.grid: {e}") from None
    if sc.top_k > sc.n_shapes:
        raise ConfigError(f"{where}: top_k={sc.top_k} exceeds n_shapes={sc.n_shapes}")
    return sc


def _params_cell(shape) -> str:
    return ";".join(f"{k}={v!r}" for k, v in shape_to_dict(shape)["params"].items())


def _band_cols(e):
    b = e.band
    return [b.lower, b.upper, b.epsilon, b.degenerate]


# ---------------------------------------------------------------------------
# Subcommand handlers
# ---------------------------------------------------------------------------


def _cmd_grid(args) -> int:
    cfg = _load_config(args.config)
    _check_keys(cfg, {"lo", "hi", "n", "master_seed"}, "grid")
    try:
        grid = base_lr_grid(_float(cfg, "lo", "grid"), _float(cfg, "hi", "grid"), _int(cfg, "n", "grid", lo=2))
    except ValueError as e:
        raise ConfigError(f"grid: {e}") from None
    out = prepare_out_dir(args.out, args.force)
    write_csv(out / "grid.csv", ["index", "lr"], [(i, float(v)) for i, v in enumerate(grid)])
    write_manifest(out, "grid", cfg, _master_seed(cfg, args, "grid", required=False))
    return EXIT_OK


def _cmd_theory(args) -> int:
    cfg = _load_config(args.config)
    _check_keys(cfg, {"dim", "batch", "horizon", "schedule", "master_seed"}, "theory")
    problem = _problem_from(cfg, "theory")
    lrs, _desc = _schedule_lrs_from(cfg, problem.horizon, "theory")
    losses, diverged = solve_theory(problem, lrs)
    out = prepare_out_dir(args.out, args.force)
    write_csv(out / "theory_losses.csv", ["step", "loss"], list(enumerate(losses.tolist())))
    write_json(out / "summary.json", {
        "diverged": diverged,
        "final_loss": float(losses[-1]),
        "min_loss": float(losses.min()),
        "n_steps": int(losses.size - 1),
    })
    write_manifest(out, "theory", cfg, _master_seed(cfg, args, "theory", required=False))
    return EXIT_OK


def _cmd_simulate(args) -> int:
    cfg = _load_config(args.config)
    _check_keys(cfg, {"dim", "batch", "horizon", "schedule", "master_seed"}, "simulate")
    problem = _problem_from(cfg, "simulate")
    lrs, _desc = _schedule_lrs_from(cfg, problem.horizon, "simulate")
    seed = _master_seed(cfg, args, "simulate")
    losses, diverged = simulate_empirical(problem, lrs, seed)
    out = prepare_out_dir(args.out, args.force)
    write_csv(out / "empirical_losses.csv", ["step", "loss"], list(enumerate(losses.tolist())))
    write_json(out / "summary.json", {
        "diverged": diverged,
        "final_loss": float(losses[-1]),
        "min_loss": float(losses.min()),
        "n_steps": int(losses.size - 1),
    })
    write_manifest(out, "simulate", cfg, seed)
    return EXIT_OK


_PROTOCOL_KEYS = {"n_shapes", "k_search", "top_k", "n_init", "n_order", "grid", "eval_delta"}


def _cmd_search(args) -> int:
    cfg = _load_config(args.config)
    _check_keys(cfg, {"family", "objective", "master_seed"} | _PROTOCOL_KEYS, "search")
    family = _str(cfg, "family", "search", choices=set(FAMILIES))
    objective = _objective_from(cfg, "search")
    sc = _search_config_from(cfg, family, "search")
    seed = _master_seed(cfg, args, "search")
    report = search_step(objective, sc, seed, _threads(args))

    out = prepare_out_dir(args.out, args.force)
    write_json(out / "report.json", report.to_dict())
    write_csv(
        out / "search_summary.csv",
        ["rank", "shape_id", "best_lr", "lr_index", "lr_at_edge", "search_median", "params"],
        [
            (r, e.shape_id, e.best_lr, e.lr_index, e.lr_at_edge, e.search_median, _params_cell(e.shape))
            for r, e in enumerate(report.entries)
        ],
    )
    write_csv(out / "ecdf.csv", ["score", "prob"], report.ecdf_points())
    write_csv(out / "lr_hist.csv", ["lr", "count"], report.best_lr_histogram())
    write_manifest(out, "search", cfg, seed)
    return EXIT_OK


def _cmd_evaluate(args) -> int:
    cfg = _load_config(args.config)
    _check_keys(cfg, {"report", "objective", "master_seed"}, "evaluate")
    rpt_path = _str(cfg, "report", "evaluate")
    try:
        report = SearchReport.from_dict(read_json(rpt_path))
    except FileNotFoundError:
        raise ConfigError(f"evaluate: report file not found: {rpt_path}") from None
    except (KeyError, TypeError, ValueError, json.JSONDecodeError) as e:
        raise ConfigError(f"evaluate: report file {rpt_path} is not a valid search report: {e}") from None
    if args.seed is not None or "master_seed" in cfg:
        report.master_seed = _master_seed(cfg, args, "evaluate")
    objective = _objective_from(cfg, "evaluate")
    try:
        eval_report, records = evaluation_step(report, objective, _threads(args))
    except ValueError as e:
        raise ConfigError(f"evaluate: {e}") from None

    out = prepare_out_dir(args.out, args.force)
    write_json(out / "report.json", eval_report.to_dict())
    write_csv(
        out / "eval_summary.csv",
        ["rank", "shape_id", "best_lr", "eval_median", "band_lower", "band_upper",
         "epsilon", "degenerate", "n_eval_runs", "search_median", "params"],
        [
            (r, e.shape_id, e.best_lr, e.eval_median, *_band_cols(e),
             e.n_eval_runs, e.search_median, _params_cell(e.shape))
            for r, e in enumerate(eval_report.entries)
        ],
    )
    write_jsonl(out / "eval_records.jsonl", [rec.to_dict() for rec in records])
    write_manifest(out, "evaluate", cfg, report.master_seed)
    return EXIT_OK


def _cmd_linesearch(args) -> int:
    cfg = _load_config(args.config)
    _check_keys(cfg, {"objective", "shape", "sweep_values", "n_points", "master_seed"} | _PROTOCOL_KEYS, "linesearch")
    objective = _objective_from(cfg, "linesearch")
    shape_block = _get(cfg, "shape", dict, "linesearch")
    _check_keys(shape_block, {"family", "params"}, "linesearch.shape")
    shape = _shape_from(shape_block, "linesearch.shape")
    sc = _search_config_from({**cfg, "n_shapes": 1, "top_k": 1}, shape.family, "linesearch")
    n_points = _int(cfg, "n_points", "linesearch", default=9, lo=2)
    sweep = _get(cfg, "sweep_values", dict, "linesearch", default=None)
    if sweep is not None:
        for k, v in sweep.items():
            if not isinstance(v, list) or not all(isinstance(x, (int, float)) and not isinstance(x, bool) for x in v):
                raise ConfigError(f"linesearch: sweep_values[{k!r}] must be a list of numbers")
    seed = _master_seed(cfg, args, "linesearch")
    try:
        points = coordinate_linesearch(
            objective, shape, sc, seed, _threads(args), n_points=n_points, sweep_values=sweep
        )
    except ShapeError as e:
        raise ConfigError(f"linesearch: {e}") from None

    out = prepare_out_dir(args.out, args.force)
    write_csv(
        out / "linesearch.csv",
        ["param", "value", "is_original", "best_lr", "median",
         "band_lower", "band_upper", "epsilon", "degenerate"],
        [
            (p.param, p.value, p.is_original, p.best_lr, p.median,
             p.band.lower, p.band.upper, p.band.epsilon, p.band.degenerate)
            for p in points
        ],
    )
    write_manifest(out, "linesearch", cfg, seed)
    return EXIT_OK


def _cmd_ecdf(args) -> int:
    cfg = _load_config(args.config)
    _check_keys(cfg, {"report", "reports", "master_seed"}, "ecdf")
    if ("report" in cfg) == ("reports" in cfg):
        raise ConfigError("ecdf: provide exactly one of 'report' or 'reports'")
    if "report" in cfg:
        paths = [_str(cfg, "report", "ecdf")]
    else:
        raw = _get(cfg, "reports", list, "ecdf")
        if not raw or not all(isinstance(p, str) for p in raw):
            raise ConfigError("ecdf: field 'reports' must be a non-empty list of paths")
        paths = list(raw)
    rows = []
    for p in paths:
        try:
            report = SearchReport.from_dict(read_json(p))
        except FileNotFoundError:
            raise ConfigError(f"ecdf: report file not found: {p}") from None
        except (KeyError, TypeError, ValueError, json.JSONDecodeError) as e:
            raise ConfigError(f"ecdf: report file {p} is not a valid search report: {e}") from None
        for s, prob in report.ecdf_points():
            rows.append((report.family, s, prob))
    out = prepare_out_dir(args.out, args.force)
    write_csv(out / "ecdf.csv", ["family", "score", "prob"], rows)
    write_manifest(out, "ecdf", cfg, _master_seed(cfg, args, "ecdf", required=False))
    return EXIT_OK


def _cmd_xcond(args) -> int:
    cfg = _load_config(args.config)
    _check_keys(
        cfg,
        {"family", "workload", "optimizer", "conditions", "metric", "master_seed"} | _PROTOCOL_KEYS,
        "xcond",
    )
    family = _str(cfg, "family", "xcond", choices=set(FAMILIES))
    workload = _workload_from(_get(cfg, "workload", dict, "xcond", default={}), "xcond.workload")
    opt = _optimizer_from(_get(cfg, "optimizer", dict, "xcond", default={}), "xcond.optimizer")
    metric = _str(cfg, "metric", "xcond", default="loss", choices={"loss", "error"})
    raw_conditions = _get(cfg, "conditions", list, "xcond")
    if len(raw_conditions) < 2:
        raise ConfigError("xcond: field 'conditions' needs at least 2 entries")
    conditions = []
    for i, block in enumerate(raw_conditions):
        wc = f"xcond.conditions[{i}]"
        if not isinstance(block, dict):
            raise ConfigError(f"{wc}: each condition must be an object")
        _check_keys(block, {"label", "beta1", "beta2", "weight_decay", "horizon"}, wc)
        conditions.append(
            Condition(
                label=_str(block, "label", wc),
                beta1=_float(block, "beta1", wc, default=None),
                beta2=_float(block, "beta2", wc, default=None),
                weight_decay=_float(block, "weight_decay", wc, default=None),
                horizon=_int(block, "horizon", wc, default=None, lo=1),
            )
        )
    sc = _search_config_from(cfg, family, "xcond")
    seed = _master_seed(cfg, args, "xcond")
    try:
        result = cross_condition_matrix(workload, opt, conditions, sc, seed, _threads(args), metric)
    except ValueError as e:
        raise ConfigError(f"xcond: {e}") from None

    out = prepare_out_dir(args.out, args.force)
    write_csv(
        out / "xcond_matrix.csv",
        ["selection", "evaluation", "median", "spread", "lower", "upper"],
        [(c.selection, c.evaluation, c.median, c.spread, c.lower, c.upper) for c in result.cells],
    )
    write_csv(
        out / "xcond_selected.csv",
        ["label", "family", "best_lr", "params"],
        [
            (lab, result.selected[lab][0].family, result.selected[lab][1], _params_cell(result.selected[lab][0]))
            for lab in result.labels
        ],
    )
    write_manifest(out, "xcond", cfg, seed)
    return EXIT_OK


def _cmd_sched_descent(args) -> int:
    cfg = _load_config(args.config)
    allowed = {"dim", "batch", "horizon", "meta_lr", "meta_steps", "blowup_threshold",
               "shrink_factor", "snapshot_every", "init_grid", "master_seed"}
    _check_keys(cfg, allowed, "sched-descent")
    problem = _problem_from(cfg, "sched-descent")
    kw = {}
    for name in ("meta_lr", "blowup_threshold", "shrink_factor"):
        if name in cfg:
            kw[name] = _float(cfg, name, "sched-descent")
    for name in ("meta_steps", "snapshot_every"):
        if name in cfg:
            kw[name] = _int(cfg, name, "sched-descent", lo=1)
    if "init_grid" in cfg:
        raw = _get(cfg, "init_grid", list, "sched-descent")
        if not raw or not all(isinstance(x, (int, float)) and not isinstance(x, bool) for x in raw):
            raise ConfigError("sched-descent: field 'init_grid' must be a non-empty list of numbers")
        kw["init_grid"] = tuple(float(x) for x in raw)
    try:
        dcfg = DescentConfig(**kw)
    except ValueError as e:
        raise ConfigError(f"sched-descent: {e}") from None

    result = schedule_descent(problem, dcfg)

    out = prepare_out_dir(args.out, args.force)
    write_csv(out / "descent_schedule.csv", ["step", "lr"], list(enumerate(result.lrs.tolist())))
    write_csv(
        out / "descent_trace.csv",
        ["meta_step", "loss", "kind", "grad_norm_sq"],
        [(t.meta_step, t.loss, t.kind, t.grad_norm_sq) for t in result.trace],
    )
    write_csv(
        out / "descent_snapshots.csv",
        ["meta_step", "step", "lr"],
        [(ms, t, float(v)) for ms, snap in result.snapshots for t, v in enumerate(snap.tolist())],
    )
    n_shrink = sum(1 for t in result.trace if t.kind == "shrink")
    write_json(out / "descent_summary.json", {
        "final_loss": result.final_loss,
        "init_loss": result.init_loss,
        "init_lr": result.init_lr,
        "meta_steps": dcfg.meta_steps,
        "n_shrink_steps": n_shrink,
    })
    write_manifest(out, "sched-descent", cfg, _master_seed(cfg, args, "sched-descent", required=False))
    return EXIT_OK


def _cmd_noise(args) -> int:
    cfg = _load_config(args.config)
    allowed = {"family", "objective", "n_shapes", "n_seeds", "subset_sizes", "top_k",
               "k_pick", "grid", "master_seed"}
    _check_keys(cfg, allowed, "noise")
    family = _str(cfg, "family", "noise", choices=set(FAMILIES))
    objective = _objective_from(cfg, "noise")
    if objective.deterministic:
        raise ConfigError("noise: objective kind 'theory' has no seed noise; use 'empirical' or 'toy'")
    n_shapes = _int(cfg, "n_shapes", "noise", lo=1)
    n_seeds = _int(cfg, "n_seeds", "noise", default=100, lo=1)
    top_k = _int(cfg, "top_k", "noise", default=100, lo=1)
    k_pick = _int(cfg, "k_pick", "noise", default=1, lo=1)
    raw_sizes = _get(cfg, "subset_sizes", list, "noise", default=[1, 3, 10, 100])
    if not raw_sizes or not all(isinstance(s, int) and not isinstance(s, bool) and s >= 1 for s in raw_sizes):
        raise ConfigError("noise: field 'subset_sizes' must be a non-empty list of positive ints")
    subset_sizes = tuple(raw_sizes)
    gblock = _get(cfg, "grid", dict, "noise", default={"lo": 1e-4, "hi": 1e-1, "n": 16})
    _check_keys(gblock, {"lo", "hi", "n"}, "noise.grid")
    try:
        grid = base_lr_grid(
            _float(gblock, "lo", "noise.grid"), _float(gblock, "hi", "noise.grid"),
            _int(gblock, "n", "noise.grid", lo=2),
        )
    except ValueError as e:
        raise ConfigError(f"noise.grid: {e}") from None
    seed = _master_seed(cfg, args, "noise")
    threads = _threads(args)

    shapes = sample_search_shapes(family, n_shapes, seed)
    lrs, _idx = pick_best_lrs(objective, shapes, grid, seed, k_pick, threads)
    try:
        result = noise_characterization(
            objective, shapes, lrs, seed,
            n_seeds=n_seeds, subset_sizes=subset_sizes, top_k=top_k, threads=threads,
        )
    except ValueError as e:
        raise ConfigError(f"noise: {e}") from None

    out = prepare_out_dir(args.out, args.force)
    write_csv(
        out / "noise_rates.csv",
        ["subset_size", "false_negative_rate"],
        [(s, result.false_negative_rates[s]) for s in result.subset_sizes],
    )
    med_header = ["shape_id", "best_lr", "median_ref"] + [f"median_b_{s}" for s in result.subset_sizes]
    med_rows = [
        [i, float(lrs[i]), float(result.medians_ref[i])]
        + [float(result.subset_medians[s][i]) for s in result.subset_sizes]
        for i in range(n_shapes)
    ]
    write_csv(out / "noise_medians.csv", med_header, med_rows)
    write_manifest(out, "noise", cfg, seed)
    return EXIT_OK


def _read_lr_column(path) -> np.ndarray:
    try:
        with open(path, encoding="utf-8", newline="") as fh:
            reader = csv.DictReader(fh)
            if reader.fieldnames is None or "lr" not in reader.fieldnames:
                raise ConfigError(f"fit-family: {path} must be a CSV with an 'lr' column")
            vals = [float(row["lr"]) for row in reader]
    except FileNotFoundError:
        raise ConfigError(f"fit-family: target CSV not found: {path}") from None
    except ValueError as e:
        raise ConfigError(f"fit-family: {path} has a non-numeric 'lr' value: {e}") from None
    if len(vals) < 2:
        raise ConfigError(f"fit-family: {path} must contain at least 2 rows")
    return np.asarray(vals)


def _cmd_fit_family(args) -> int:
    cfg = _load_config(args.config)
    allowed = {"family", "target_curve", "target_csv", "seed", "n_random",
               "n_restarts", "max_evals", "step_tol", "master_seed"}
    _check_keys(cfg, allowed, "fit-family")
    family = _str(cfg, "family", "fit-family", choices=set(FAMILIES))
    has_curve = "target_curve" in cfg
    has_csv = "target_csv" in cfg
    if has_curve == has_csv:
        raise ConfigError("fit-family: provide exactly one of 'target_curve' or 'target_csv'")
    scale = 1.0
    if has_curve:
        raw = _get(cfg, "target_curve", list, "fit-family")
        if not raw or not all(isinstance(x, (int, float)) and not isinstance(x, bool) for x in raw):
            raise ConfigError("fit-family: field 'target_curve' must be a non-empty list of numbers")
        target = np.asarray(raw, dtype=float)
    else:
        lrs = _read_lr_column(_str(cfg, "target_csv", "fit-family"))
        if float(lrs.min()) < 0.0:
            raise ConfigError("fit-family: target CSV LRs must be >= 0")
        scale = float(lrs.max())
        if scale <= 0.0:
            raise ConfigError("fit-family: target CSV LRs are all zero; nothing to fit")
        target = lrs / scale
    kw = {}
    for name, lo in (("n_random", 1), ("n_restarts", 1), ("max_evals", 1)):
        if name in cfg:
            kw[name] = _int(cfg, name, "fit-family", lo=lo)
    if "step_tol" in cfg:
        kw["step_tol"] = _float(cfg, "step_tol", "fit-family")
    fit_seed = _int(cfg, "seed", "fit-family", default=0, lo=0)
    seed = _master_seed(cfg, args, "fit-family", required=False)
    try:
        fit = fit_family_to_target(family, target, seed=fit_seed, **kw)
    except ShapeError as e:
        raise ConfigError(f"fit-family: {e}") from None

    fracs = np.arange(target.size) / target.size
    fitted = eval_shape(fit.shape, fracs)
    out = prepare_out_dir(args.out, args.force)
    write_json(out / "fit.json", {
        "shape": shape_to_dict(fit.shape),
        "mse": fit.mse,
        "converged": fit.converged,
        "n_evals": fit.n_evals,
        "scale": scale,
    })
    write_csv(
        out / "fit_curve.csv",
        ["index", "target", "fitted"],
        [(i, float(target[i]), float(fitted[i])) for i in range(target.size)],
    )
    write_manifest(out, "fit-family", cfg, seed)
    return EXIT_OK


# ---------------------------------------------------------------------------
# Export helper subcommand-free API used by docs and tests
# ---------------------------------------------------------------------------


def export_artifacts(out_dir, spec: ScheduleSpec, resolution: int = 101) -> None:
    """Convenience: write schedule.json + schedule.csv for one ScheduleSpec."""
    out = Path(out_dir)
    write_schedule_json(out / "schedule.json", spec)
    export_schedule_csv(out / "schedule.csv", spec, resolution)


# ---------------------------------------------------------------------------
# Parser and dispatch
# ---------------------------------------------------------------------------

_HANDLERS = {
    "search": _cmd_search,
    "evaluate": _cmd_evaluate,
    "linesearch": _cmd_linesearch,
    "ecdf": _cmd_ecdf,
    "xcond": _cmd_xcond,
    "sched-descent": _cmd_sched_descent,
    "theory": _cmd_theory,
    "simulate": _cmd_simulate,
    "noise": _cmd_noise,
    "fit-family": _cmd_fit_family,
    "grid": _cmd_grid,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="lrslab",
        description="Learning-rate schedule laboratory: search, evaluate, and analyze schedule shapes.",
    )
    parser.add_argument("--version", action="version", version=f"lrslab {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, metavar="command")
    for name in _HANDLERS:
        p = sub.add_parser(name, help=f"run the {name} command")
        p.add_argument("--config", required=True, help="path to the JSON config file")
        p.add_argument("--out", required=True, help="output directory for artifacts")
        p.add_argument("--seed", type=int, default=None, help="master seed (overrides the config)")
        p.add_argument("--force", action="store_true", help="overwrite an existing output directory")
        p.add_argument("--threads", type=int, default=None,
                       help="worker processes; 0 = auto (env LRSLAB_THREADS as fallback)")
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.seed is not None and args.seed < 0:
        print("lrslab: error: --seed must be >= 0", file=sys.stderr)
        return EXIT_CONFIG
    handler = _HANDLERS[args.command]
    try:
        _threads_env()
        return handler(args)
    except (ConfigError, OutputExistsError, ShapeError) as e:
        print(f"lrslab: error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    except DivergenceError as e:
        print(f"lrslab: divergence: {e}", file=sys.stderr)
        return EXIT_DIVERGED


if __name__ == "__main__":
    sys.exit(main())
