"""Command-line front end: ``dpsgd-bayes <command> [flags]``.

Every command prints plain text by default and a JSON envelope with
``--json``. Exit codes: 0 success, 2 usage error, 3 out-of-regime warning
under ``--strict``.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import json
import math
import sys
import time
import warnings
from pathlib import Path
from typing import Any, Optional, Sequence

import numpy as np

from . import __version__
from .bounds import (
    DpSgdConfig,
    InvalidConfigError,
    TprQuery,
    advantage_from_dp,
    ai_bound,
    eps_lower_bound,
    mia_bound,
    select_noise_multiplier,
    select_sampling_rate,
    tpr_bound,
)
from .trainer.dpsgd import DATA_DEPENDENCE_CAVEAT

MODES = ("nominal", "conservative", "empirical", "numerical")
ENVELOPE_KEYS = ("command", "inputs", "results", "timing_seconds", "tool_version", "seed")
EXIT_OK, EXIT_USAGE, EXIT_REGIME = 0, 2, 3


class UsageError(Exception):
    """Bad flags or inputs; reported on stderr with exit code 2."""


def V(value: float, mode: str, ci: Optional[float] = None) -> dict:
    """A numeric result tagged with how it was obtained."""
    if mode not in MODES:
        raise ValueError(f"unknown mode {mode!r}")
    out = {"value": float(value), "mode": mode}
    if ci is not None:
        out["ci_half_width"] = float(ci)
    return out


def validate_envelope(env: dict) -> None:
    """Check the documented envelope schema.

    Numbers inside ``results`` must be wrapped as ``{"value", "mode"}``
    except inside ``at`` (coordinates of a grid cell).

    Raises:
        ValueError: describing the first violation.
    """
    missing = [k for k in ENVELOPE_KEYS if k not in env]
    if missing:
        raise ValueError(f"envelope is missing {missing}")
    if not isinstance(env["timing_seconds"], (int, float)):
        raise ValueError("timing_seconds must be a number")

    def walk(node, path):
        if isinstance(node, dict):
            if "value" in node and "mode" in node:
                if node["mode"] not in MODES:
                    raise ValueError(f"{path}: unknown mode {node['mode']!r}")
                if not isinstance(node["value"], (int, float)):
                    raise ValueError(f"{path}: value must be numeric")
                return
            for k, v in node.items():
                if k == "at":
                    continue
                walk(v, f"{path}.{k}")
        elif isinstance(node, list):
            for i, v in enumerate(node):
                walk(v, f"{path}[{i}]")
        elif isinstance(node, (int, float)) and not isinstance(node, bool):
            raise ValueError(f"{path}: bare number {node!r} without a mode")

    walk(env["results"], "results")


class Context:
    def __init__(self, args):
        self.args = args
        self.regime: list[str] = []
        self.notes: list[str] = []

    def note(self, msg: str) -> None:
        self.notes.append(msg)
        print(f"note: {msg}", file=sys.stderr)

    def regime_warning(self, msg: str) -> None:
        self.regime.append(msg)
        print(f"WARNING (out of regime): {msg}", file=sys.stderr)


# ---------------------------------------------------------------- helpers

def _floats(text: str) -> list[float]:
    try:
        return [float(t) for t in text.split(",") if t.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}")


def _add_output_flags(sp):
    sp.add_argument("--json", action="store_true", help="print a JSON envelope")
    sp.add_argument("--strict", action="store_true",
                    help="exit with code 3 on out-of-regime warnings (e.g. sigma < 1)")


def _add_cfg_flags(sp, steps_required: bool = False):
    sp.add_argument("--p", type=float, help="sampling rate")
    sp.add_argument("--N", type=int, help="dataset size")
    sp.add_argument("--L", type=int, help="expected batch size (p = L/N)")
    sp.add_argument("--sigma", type=float, help="noise multiplier")
    sp.add_argument("--C", type=float, default=1.0, help="clipping norm (default 1)")
    sp.add_argument("--steps", type=int, help="number of steps T")
    sp.add_argument("--epochs", type=float, help="epochs; T = epochs * ceil(1/p)")


def _build_cfg(args, need_steps: bool = True, steps: Optional[int] = None) -> DpSgdConfig:
    if args.sigma is None:
        raise UsageError("--sigma is required")
    if args.p is None and (args.N is None or args.L is None):
        raise UsageError("give --p, or both --N and --L")
    p = args.p if args.p is not None else args.L / args.N
    if steps is None:
        if args.steps is not None:
            steps = args.steps
        elif args.epochs is not None:
            if p <= 0:
                raise UsageError("--epochs needs p > 0")
            steps = max(1, round(args.epochs * math.ceil(1.0 / p - 1e-9)))
        elif need_steps:
            raise UsageError("give --steps or --epochs")
        else:
            steps = 1
    try:
        return DpSgdConfig(args.p, args.sigma, args.C, steps, args.N, args.L)
    except InvalidConfigError as exc:
        raise UsageError(str(exc)) from None


def _cfg_inputs(cfg: DpSgdConfig) -> dict:
    return {"p": cfg.p, "sigma": cfg.sigma, "C": cfg.clip_norm, "steps": cfg.steps,
            "N": cfg.dataset_size, "L": cfg.expected_batch}


def _check_sigma(ctx: Context, sigma: float) -> bool:
    if sigma < 1.0:
        ctx.regime_warning(f"sigma={sigma:g} < 1: the closed form is not accurate in this regime")
        return True
    return False


def _require_seed(args):
    if getattr(args, "seed", None) is None:
        raise UsageError("this command is stochastic: --seed is required")


def _out_dir(args) -> Optional[Path]:
    if getattr(args, "out", None) is None:
        return None
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _write_csv(path: Path, columns: Sequence[str], rows: Sequence[dict]) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=list(columns), extrasaction="ignore")
        w.writeheader()
        w.writerows(rows)


def _bound_results(b, mode: str) -> dict:
    res = {
        "beta": V(b.value(mode), mode),
        "nominal": V(b.nominal, "nominal"),
        "analytic_error": V(b.analytic_error, "conservative"),
        "conservative": V(b.conservative, "conservative"),
        "threat": b.threat.value,
        "delta_f": V(b.delta_f, "nominal"),
    }
    if b.empirical_error is not None:
        res["empirical_error"] = V(b.empirical_error, "empirical", b.empirical_half_width)
        res["empirical"] = V(b.value("empirical"), "empirical", b.empirical_half_width)
    return res


def _empirical_bound(ctx: Context, cfg: DpSgdConfig, bound):
    from dataclasses import replace

    from .mixture import tv_channel_monte_carlo, worst_case_pair
    args = ctx.args
    _require_seed(args)
    if cfg.steps * args.samples > 5 * 10 ** 9:
        raise UsageError("empirical mode would need steps * samples > 5e9 density terms; "
                         "lower --samples or use the pld oracle")
    a, b = worst_case_pair(cfg.p, cfg.sigma, cfg.steps, cfg.clip_norm)
    est = tv_channel_monte_carlo(a, b, args.samples, args.seed, args.workers)
    beta_mc = 1.0 - est.value
    return replace(bound, empirical_error=abs(bound.nominal - beta_mc),
                   empirical_half_width=est.half_width)


# ---------------------------------------------------------------- commands

def cmd_bound_mia(ctx: Context):
    args = ctx.args
    cfg = _build_cfg(args)
    regime = _check_sigma(ctx, cfg.sigma)
    bound = mia_bound(cfg)
    if args.mode == "empirical":
        bound = _empirical_bound(ctx, cfg, bound)
    res = _bound_results(bound, args.mode)
    res["out_of_regime"] = regime
    return _cfg_inputs(cfg) | {"mode": args.mode}, res, getattr(args, "seed", None)


def cmd_bound_ai(ctx: Context):
    from .trainer.dpsgd import SensitivityTrace
    args = ctx.args
    path = Path(args.trace)
    if not path.is_file():
        raise UsageError(f"trace file {path} does not exist")
    try:
        trace = SensitivityTrace.from_csv(path)
    except ValueError as exc:
        raise UsageError(f"malformed trace: {exc}") from None
    if not trace.values:
        raise UsageError("trace is empty")
    cfg = _build_cfg(args, steps=args.steps if args.steps is not None else len(trace))
    regime = _check_sigma(ctx, cfg.sigma)
    try:
        bound = ai_bound(cfg, trace.values)
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    mia = mia_bound(cfg)
    res = _bound_results(bound, args.mode)
    res |= {"mia_nominal": V(mia.nominal, "nominal"), "trace_norm": V(trace.norm(), "nominal"),
            "trace_sha256": hashlib.sha256(path.read_bytes()).hexdigest(),
            "trace_mode": trace.mode, "data_dependent": True, "out_of_regime": regime}
    ctx.note(DATA_DEPENDENCE_CAVEAT)
    return _cfg_inputs(cfg) | {"trace": str(path), "mode": args.mode}, res, None


def cmd_select_params(ctx: Context):
    args = ctx.args
    if args.sweep:
        return _select_sweep(ctx)
    if args.beta is None or args.steps is None:
        raise UsageError("--beta and --steps are required")
    if (args.sigma is None) == (args.p is None):
        raise UsageError("give exactly one of --sigma (solve for p) or --p (solve for sigma)")
    try:
        if args.sigma is not None:
            with warnings.catch_warnings(record=True) as caught:
                warnings.simplefilter("always")
                p = select_sampling_rate(args.beta, args.sigma, args.steps)
            for w in caught:
                ctx.regime_warning(str(w.message))
            sigma = args.sigma
        else:
            p = args.p
            sigma = select_noise_multiplier(args.beta, p, args.steps)
    except (ValueError, InvalidConfigError) as exc:
        raise UsageError(str(exc)) from None
    if args.N is not None and p < 1.0 / args.N:
        ctx.regime_warning(f"p={p:.3g} is below 1/N={1.0 / args.N:.3g}; "
                           "the expected batch holds less than one record")
    _check_sigma(ctx, sigma)
    achieved = mia_bound(DpSgdConfig(p, sigma, 1.0, args.steps)).nominal
    res = {"p": V(p, "nominal"), "sigma": V(sigma, "nominal"),
           "achieved_beta": V(achieved, "nominal"),
           "p_over_sigma": V(p / sigma, "nominal")}
    if args.N is not None:
        res["expected_batch"] = V(p * args.N, "nominal")
    inputs = {"beta": args.beta, "sigma": args.sigma, "p": args.p, "steps": args.steps,
              "N": args.N}
    return inputs, res, None


def _select_sweep(ctx: Context):
    args = ctx.args
    steps = args.steps or 5000
    betas = args.betas or [0.9, 0.95, 0.98, 0.99]
    sigmas = args.sigma_grid or list(np.round(np.linspace(0.5, 5.0, 10), 4))
    rows = []
    for beta in betas:
        for sigma in sigmas:
            with warnings.catch_warnings():
                warnings.simplefilter("ignore")
                p = select_sampling_rate(beta, sigma, steps)
            rows.append({"beta": beta, "sigma": sigma, "steps": steps, "p": p})
    out = _out_dir(args)
    files = []
    if out is not None:
        path = out / "select_params_sweep.csv"
        _write_csv(path, ["beta", "sigma", "steps", "p"], rows)
        files.append(str(path))
    elif not args.json:
        _print_csv(["beta", "sigma", "steps", "p"], rows)
    res = {"rows": [{"at": {"beta": r["beta"], "sigma": r["sigma"], "steps": steps},
                     "p": V(r["p"], "nominal")} for r in rows], "files": files}
    return {"steps": steps, "betas": betas, "sigma_grid": sigmas}, res, None


def _print_csv(columns, rows):
    w = csv.DictWriter(sys.stdout, fieldnames=list(columns), extrasaction="ignore",
                       lineterminator="\n")
    w.writeheader()
    w.writerows(rows)


def cmd_tpr(ctx: Context):
    args = ctx.args
    if args.beta is None:
        cfg = _build_cfg(args)
        _check_sigma(ctx, cfg.sigma)
        beta, source = mia_bound(cfg).nominal, _cfg_inputs(cfg)
    else:
        beta, source = args.beta, {}
    try:
        points = [(f, tpr_bound(beta, TprQuery(f, args.prior))) for f in args.fpr]
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    res = {"beta": V(beta, "nominal"),
           "tpr": [{"at": {"fpr": f, "prior": args.prior}, "tpr_bound": V(t, "nominal")}
                   for f, t in points]}
    return source | {"beta": beta, "fpr": args.fpr, "prior": args.prior}, res, None


def cmd_dp_convert(ctx: Context):
    args = ctx.args
    if args.delta is None:
        raise UsageError("--delta is required")
    try:
        if args.eps is not None and args.beta is None:
            adv = advantage_from_dp(args.eps, args.delta)
            res = {"advantage": V(adv, "nominal"), "beta": V(1.0 - adv, "nominal")}
        elif args.beta is not None and args.eps is None:
            res = {"eps_lower_bound": V(eps_lower_bound(args.beta, args.delta), "nominal")}
        else:
            raise UsageError("give exactly one of --eps or --beta")
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    return {"eps": args.eps, "beta": args.beta, "delta": args.delta}, res, None


def cmd_oracle(ctx: Context):
    args = ctx.args
    from . import mixture, pld
    if args.kind == "tv1d":
        if args.sweep:
            ratios = list(np.logspace(-4, -1, args.points))
            p = args.p if args.p is not None else 0.01
            rows = mixture.tv_sweep(ratios, p, args.mu, args.C)
            out = _out_dir(args)
            files = []
            cols = ["p", "sigma", "T", "value", "half_width"]
            if out is not None:
                path = out / "tv_sweep.csv"
                _write_csv(path, cols, rows)
                files.append(str(path))
            elif not args.json:
                _print_csv(cols, rows)
            res = {"rows": [{"at": {"p": r["p"], "sigma": r["sigma"], "T": 1},
                             "tv": V(r["value"], "numerical", r["half_width"])} for r in rows],
                   "files": files}
            return {"kind": "tv1d", "p": p, "sweep": True}, res, None
        if args.p is None or args.sigma is None:
            raise UsageError("tv1d needs --p and --sigma")
        est = mixture.tv_mixture_vs_gaussian_1d(args.p, args.sigma, args.mu, args.C)
        pinsker = math.sqrt(mixture.kl_mixture_upper_bound(args.p, args.sigma, 1) / 2.0)
        res = {"tv": V(est.value, "numerical", est.half_width), "method": est.method.value,
               "nodes": V(est.samples_or_nodes, "numerical"),
               "pinsker_bound": V(pinsker, "conservative")}
        return {"kind": "tv1d", "p": args.p, "sigma": args.sigma, "mu": args.mu}, res, None

    cfg = _build_cfg(args)
    _check_sigma(ctx, cfg.sigma)
    nominal = mia_bound(cfg).nominal
    if args.kind == "mc":
        _require_seed(args)
        a, b = mixture.worst_case_pair(cfg.p, cfg.sigma, cfg.steps, cfg.clip_norm)
        try:
            est = mixture.tv_channel_monte_carlo(a, b, args.samples, args.seed, args.workers)
        except ValueError as exc:
            raise UsageError(str(exc)) from None
        res = {"tv": V(est.value, "empirical", est.half_width),
               "beta": V(1.0 - est.value, "empirical", est.half_width),
               "closed_form": V(nominal, "nominal"), "samples": V(args.samples, "empirical")}
        return _cfg_inputs(cfg) | {"kind": "mc"}, res, args.seed

    h = pld.grid_spacing_for(cfg) if args.h == "auto" else float(args.h)
    try:
        dist = pld.compose(pld.pld_single_step(cfg.p, cfg.sigma, h, args.loss_cap), cfg.steps) \
            if cfg.p > 0 else pld.pld_single_step(0.0, cfg.sigma, h)
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    eps_list = args.eps or [0.0]
    res = {"deltas": [{"at": {"eps": e}, "delta": V(pld.delta_at_eps(dist, e), "numerical")}
                      for e in eps_list],
           "beta": V(1.0 - pld.delta_at_eps(dist, 0.0), "numerical"),
           "closed_form": V(nominal, "nominal"),
           "truncated_mass_pos": V(dist.truncated_mass_pos, "numerical"),
           "grid_spacing": V(h, "numerical"),
           "rounding_shift": V(h * cfg.steps, "numerical")}
    return _cfg_inputs(cfg) | {"kind": "pld", "h": h, "loss_cap": args.loss_cap}, res, None


def cmd_compare(ctx: Context):
    from . import pld
    args = ctx.args
    cells, timing = [], []
    for sigma in args.sigma_grid:
        regime = _check_sigma(ctx, sigma)
        for epochs in args.epoch_grid:
            steps = max(1, round(epochs * math.ceil(1.0 / args.p - 1e-9)))
            cfg = DpSgdConfig(args.p, sigma, 1.0, steps)
            h = pld.grid_spacing_for(cfg) if args.h == "auto" else float(args.h)
            t0 = time.perf_counter()
            reps = 1000
            for _ in range(reps):
                closed = mia_bound(cfg).nominal
            t_closed = (time.perf_counter() - t0) / reps
            t0 = time.perf_counter()
            try:
                beta = pld.beta_via_pld(cfg, h, args.loss_cap)
            except ValueError as exc:
                raise UsageError(str(exc)) from None
            t_pld = time.perf_counter() - t0
            cells.append({"sigma": sigma, "epochs": epochs, "steps": steps, "closed_form": closed,
                          "pld": beta, "gap": abs(closed - beta), "h": h,
                          "rounding_shift": h * steps, "out_of_regime": regime})
            timing.append({"method": "closed_form", "sigma": sigma, "epochs": epochs,
                           "seconds": t_closed})
            timing.append({"method": "pld", "sigma": sigma, "epochs": epochs, "seconds": t_pld})
            if not args.json:
                print(f"sigma={sigma:<5g} epochs={epochs:<5g} closed={closed:.5f} "
                      f"pld={beta:.5f} gap={abs(closed - beta):.5f} h={h:.1e}"
                      + ("  [out of regime]" if regime else ""), file=sys.stderr)
    out = _out_dir(args)
    files = []
    cell_cols = ["sigma", "epochs", "steps", "closed_form", "pld", "gap", "h",
                 "rounding_shift", "out_of_regime"]
    if out is not None:
        _write_csv(out / "compare.csv", cell_cols, cells)
        _write_csv(out / "timing.csv", ["method", "sigma", "epochs", "seconds"], timing)
        files = [str(out / "compare.csv"), str(out / "timing.csv")]
    elif not args.json:
        _print_csv(cell_cols, cells)
    res = {
        "cells": [{"at": {"sigma": c["sigma"], "epochs": c["epochs"], "steps": c["steps"],
                          "h": c["h"]},
                   "closed_form": V(c["closed_form"], "nominal"),
                   "pld": V(c["pld"], "numerical"), "gap": V(c["gap"], "numerical"),
                   "rounding_shift": V(c["rounding_shift"], "numerical"),
                   "out_of_regime": c["out_of_regime"]} for c in cells],
        "timing": [{"at": {"method": t["method"], "sigma": t["sigma"], "epochs": t["epochs"]},
                    "seconds": V(t["seconds"], "empirical")} for t in timing],
        "files": files,
    }
    inputs = {"p": args.p, "sigma_grid": args.sigma_grid, "epoch_grid": args.epoch_grid,
              "h": args.h, "loss_cap": args.loss_cap}
    return inputs, res, None


def cmd_attack(ctx: Context):
    from .attack import GameConfig, roc_sweep, run_mia_game
    from .mixture import worst_case_pair
    args = ctx.args
    _require_seed(args)
    cfg = _build_cfg(args)
    regime = _check_sigma(ctx, cfg.sigma)
    a, b = worst_case_pair(cfg.p, cfg.sigma, cfg.steps, cfg.clip_norm)
    try:
        game = GameConfig(a, b, args.prior, args.trials, args.seed)
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    result = run_mia_game(game, args.workers)
    nominal = mia_bound(cfg).nominal
    ci = result.ci_half_width
    res = {
        "advantage": V(result.advantage, "empirical", ci),
        "success_rate": V(result.success_rate, "empirical",
                          0.5 * (result.success_ci[1] - result.success_ci[0])),
        "tpr": V(result.tpr, "empirical", 0.5 * (result.tpr_ci[1] - result.tpr_ci[0])),
        "fpr": V(result.fpr, "empirical", 0.5 * (result.fpr_ci[1] - result.fpr_ci[0])),
        "advantage_bound": V(1.0 - nominal, "nominal"),
        "within_bound": bool(result.advantage <= 1.0 - nominal + 3.0 * ci),
        "out_of_regime": regime,
    }
    files = []
    if args.roc:
        points = roc_sweep(game, sorted(args.roc), args.workers)
        rows = [{"threshold": pt.threshold, "fpr": pt.fpr, "tpr": pt.tpr,
                 "ci_half_width": pt.ci_half_width,
                 "tpr_bound": tpr_bound(nominal, TprQuery(pt.fpr, args.prior))} for pt in points]
        res["roc"] = [{"at": {"threshold": r["threshold"]},
                       "fpr": V(r["fpr"], "empirical", None),
                       "tpr": V(r["tpr"], "empirical", r["ci_half_width"]),
                       "tpr_bound": V(r["tpr_bound"], "nominal")} for r in rows]
        out = _out_dir(args)
        if out is not None:
            _write_csv(out / "roc.csv", ["threshold", "fpr", "tpr", "ci_half_width", "tpr_bound"],
                       rows)
            files.append(str(out / "roc.csv"))
    res["files"] = files
    inputs = _cfg_inputs(cfg) | {"prior": args.prior, "trials": args.trials}
    return inputs, res, args.seed


def cmd_train(ctx: Context):
    from .trainer import TrainConfig, load_csv, load_schema, train
    from .trainer.data import SchemaError, read_key_values
    args = ctx.args
    _require_seed(args)
    if args.out is None:
        raise UsageError("--out is required")
    try:
        kv = read_key_values(args.schema)
        schema = load_schema(args.schema)
        ds = load_csv(args.data, schema)
        overrides = {k: v for k, v in {"epochs": args.epochs, "steps": args.steps,
                                       "learning_rate": args.learning_rate,
                                       "noise_multiplier": args.sigma}.items() if v is not None}
        cfg = TrainConfig.from_mapping(kv | {k: str(v) for k, v in overrides.items()}
                                       | {"seed": str(args.seed)})
    except (OSError, SchemaError, ValueError) as exc:
        raise UsageError(str(exc)) from None
    _check_sigma(ctx, cfg.noise_multiplier)
    out = _out_dir(args)
    modes = ["none", "mia", "ai_full", "ai_approx"] if args.bench else [args.analysis]
    reports = {m: train(ds, cfg, m, args.seed) for m in modes}
    files = []
    bench_rows = []
    for mode, rep in reports.items():
        suffix = "" if len(modes) == 1 else f"_{mode}"
        jsonl = out / f"report{suffix}.jsonl"
        with open(jsonl, "w") as fh:
            for e in rep.epochs:
                fh.write(json.dumps(e.to_dict() | {"analysis_mode": mode}) + "\n")
        summary = out / f"summary{suffix}.csv"
        cols = ["epoch", "steps", "loss", "accuracy", "mia_beta", "ai_beta_full",
                "ai_beta_approx", "seconds_train", "seconds_mia", "seconds_ai_full",
                "seconds_ai_approx"]
        _write_csv(summary, cols, [
            e.to_dict() | {f"seconds_{k}": v for k, v in e.wall_time.items()} for e in rep.epochs])
        files += [str(jsonl), str(summary)]
        for name, trace in rep.traces.items():
            path = out / f"trace_{name}{suffix}.csv"
            trace.to_csv(path)
            files.append(str(path))
        for e in rep.epochs:
            bench_rows.append({"mode": mode, "epoch": e.epoch} | e.wall_time)
    if args.bench:
        _write_csv(out / "bench.csv", ["mode", "epoch", "train", "mia", "ai_full", "ai_approx"],
                   bench_rows)
        files.append(str(out / "bench.csv"))
    main_rep = reports[modes[-1] if args.bench else args.analysis]
    if main_rep.ai_data_dependent:
        ctx.note(DATA_DEPENDENCE_CAVEAT)
    last = main_rep.epochs[-1] if main_rep.epochs else None
    res: dict[str, Any] = {"files": files, "aborted": main_rep.aborted,
                           "data_dependent": main_rep.ai_data_dependent}
    if last is not None:
        res["epochs_completed"] = V(last.epoch, "empirical")
        res["final_accuracy"] = V(last.accuracy, "empirical")
        for key in ("mia_beta", "ai_beta_full", "ai_beta_approx"):
            if getattr(last, key) is not None:
                res[key] = V(getattr(last, key), "nominal")
    if args.bench:
        per_mode = {}
        for mode, rep in reports.items():
            secs = [sum(e.wall_time.values()) for e in rep.epochs]
            per_mode[mode] = V(float(np.mean(secs)) if secs else 0.0, "empirical")
        res["seconds_per_epoch"] = per_mode
    inputs = {"data": args.data, "schema": args.schema, "analysis": args.analysis,
              "bench": args.bench, "config": {k: v for k, v in vars(cfg).items()}}
    return inputs, res, args.seed


def cmd_synth(ctx: Context):
    from .trainer.synthetic import write_synthetic
    args = ctx.args
    _require_seed(args)
    if args.out is None:
        raise UsageError("--out is required")
    csv_path, schema_path = write_synthetic(args.kind, args.out, args.n, args.seed)
    return ({"kind": args.kind, "n": args.n},
            {"files": [str(csv_path), str(schema_path)]}, args.seed)


# ---------------------------------------------------------------- parser

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="dpsgd-bayes", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    sp = sub.add_parser("bound-mia", help="closed-form MIA Bayes security")
    _add_cfg_flags(sp)
    sp.add_argument("--mode", choices=("nominal", "conservative", "empirical"), default="nominal")
    sp.add_argument("--samples", type=int, default=10 ** 6, help="Monte Carlo samples (empirical)")
    sp.add_argument("--seed", type=int)
    sp.add_argument("--workers", type=int)
    _add_output_flags(sp)
    sp.set_defaults(func=cmd_bound_mia)

    sp = sub.add_parser("bound-ai", help="data-dependent AI Bayes security from a trace")
    sp.add_argument("--trace", required=True, help="CSV with columns t, R_t, mode")
    _add_cfg_flags(sp)
    sp.add_argument("--mode", choices=("nominal", "conservative"), default="nominal")
    _add_output_flags(sp)
    sp.set_defaults(func=cmd_bound_ai)

    sp = sub.add_parser("select-params", help="solve for p (or sigma) given a target beta")
    sp.add_argument("--beta", type=float)
    sp.add_argument("--sigma", type=float)
    sp.add_argument("--p", type=float)
    sp.add_argument("--steps", type=int)
    sp.add_argument("--N", type=int)
    sp.add_argument("--sweep", action="store_true", help="emit a beta x sigma -> p grid")
    sp.add_argument("--betas", type=_floats)
    sp.add_argument("--sigma-grid", type=_floats)
    sp.add_argument("--out")
    _add_output_flags(sp)
    sp.set_defaults(func=cmd_select_params)

    sp = sub.add_parser("tpr", help="TPR@FPR bound")
    sp.add_argument("--beta", type=float)
    sp.add_argument("--fpr", type=_floats, required=True)
    sp.add_argument("--prior", type=float, default=0.5)
    _add_cfg_flags(sp)
    _add_output_flags(sp)
    sp.set_defaults(func=cmd_tpr)

    sp = sub.add_parser("dp-convert", help="(eps, delta) <-> advantage / beta")
    sp.add_argument("--eps", type=float)
    sp.add_argument("--beta", type=float)
    sp.add_argument("--delta", type=float)
    _add_output_flags(sp)
    sp.set_defaults(func=cmd_dp_convert)

    sp = sub.add_parser("oracle", help="numerical ground truth")
    sp.add_argument("--kind", choices=("tv1d", "mc", "pld"), required=True)
    _add_cfg_flags(sp)
    sp.add_argument("--mu", type=float, help="tv1d: challenge mean (default C)")
    sp.add_argument("--sweep", action="store_true", help="tv1d: p/sigma sweep CSV")
    sp.add_argument("--points", type=int, default=13)
    sp.add_argument("--samples", type=int, default=10 ** 6)
    sp.add_argument("--seed", type=int)
    sp.add_argument("--workers", type=int)
    sp.add_argument("--h", default="1e-4", help="PLD grid spacing or 'auto'")
    sp.add_argument("--loss-cap", type=float, default=30.0)
    sp.add_argument("--eps", type=_floats)
    sp.add_argument("--out")
    _add_output_flags(sp)
    sp.set_defaults(func=cmd_oracle)

    sp = sub.add_parser("compare", help="closed form vs PLD heat map and timings")
    sp.add_argument("--p", type=float, default=0.001)
    sp.add_argument("--sigma-grid", type=_floats, default=[0.5, 1.0, 2.0, 4.0])
    sp.add_argument("--epoch-grid", type=_floats, default=[1.0, 10.0, 50.0, 100.0])
    sp.add_argument("--h", default="auto", help="PLD grid spacing or 'auto'")
    sp.add_argument("--loss-cap", type=float, default=30.0)
    sp.add_argument("--out")
    _add_output_flags(sp)
    sp.set_defaults(func=cmd_compare)

    sp = sub.add_parser("attack", help="simulate the MIA game with the optimal attacker")
    _add_cfg_flags(sp)
    sp.add_argument("--prior", type=float, default=0.5)
    sp.add_argument("--trials", type=int, default=10 ** 5)
    sp.add_argument("--seed", type=int)
    sp.add_argument("--workers", type=int)
    sp.add_argument("--roc", type=_floats, help="likelihood-ratio thresholds")
    sp.add_argument("--out")
    _add_output_flags(sp)
    sp.set_defaults(func=cmd_attack)

    sp = sub.add_parser("train", help="DP-SGD with bound instrumentation")
    sp.add_argument("--data", required=True)
    sp.add_argument("--schema", required=True)
    sp.add_argument("--analysis", choices=("none", "mia", "ai_full", "ai_approx"), default="mia")
    sp.add_argument("--seed", type=int)
    sp.add_argument("--epochs", type=int)
    sp.add_argument("--steps", type=int)
    sp.add_argument("--learning-rate", type=float)
    sp.add_argument("--sigma", type=float, help="override noise_multiplier")
    sp.add_argument("--bench", action="store_true", help="run every analysis mode and time it")
    sp.add_argument("--out")
    _add_output_flags(sp)
    sp.set_defaults(func=cmd_train)

    sp = sub.add_parser("synth", help="write a synthetic dataset and schema")
    sp.add_argument("--kind", choices=("adult", "purchase"), required=True)
    sp.add_argument("--n", type=int)
    sp.add_argument("--seed", type=int)
    sp.add_argument("--out")
    _add_output_flags(sp)
    sp.set_defaults(func=cmd_synth)
    return parser


def _print_text(command: str, results: dict) -> None:
    def show(prefix, node):
        if isinstance(node, dict) and "value" in node and "mode" in node:
            ci = f" ± {node['ci_half_width']:.3g}" if "ci_half_width" in node else ""
            print(f"{prefix}: {node['value']:.10g}{ci} ({node['mode']})")
        elif isinstance(node, dict):
            at = node.get("at")
            label = prefix + (" [" + ", ".join(f"{k}={v}" for k, v in at.items()) + "]" if at else "")
            for k, v in node.items():
                if k != "at":
                    show(f"{label}.{k}" if label else k, v)
        elif isinstance(node, list):
            for i, v in enumerate(node):
                show(f"{prefix}[{i}]", v)
        else:
            print(f"{prefix}: {node}")
    show("", results)


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    ctx = Context(args)
    start = time.perf_counter()
    try:
        with warnings.catch_warnings(record=True) as caught:
            warnings.simplefilter("always")
            inputs, results, seed = args.func(ctx)
        for w in caught:
            print(f"warning: {w.message}", file=sys.stderr)
            ctx.notes.append(str(w.message))
    except UsageError as exc:
        print(f"dpsgd-bayes {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    elapsed = time.perf_counter() - start
    if ctx.regime or ctx.notes:
        results["warnings"] = ctx.regime + ctx.notes
    envelope = {"command": args.command, "inputs": inputs, "results": results,
                "timing_seconds": elapsed, "tool_version": __version__, "seed": seed}
    if args.json:
        print(json.dumps(envelope, indent=2, default=_json_default))
    else:
        _print_text(args.command, results)
    if args.strict and ctx.regime:
        return EXIT_REGIME
    return EXIT_OK


def _json_default(obj):
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.floating,)):
        return float(obj)
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, Path):
        return str(obj)
    raise TypeError(f"not JSON serializable: {type(obj).__name__}")


if __name__ == "__main__":
    sys.exit(main())
