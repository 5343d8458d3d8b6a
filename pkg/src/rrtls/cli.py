"""Batch command-line interface.

Subcommands
-----------
estimate
    Single-shot estimation over data files (observation vector plus design
    matrix); prints the parameter estimate, the signal estimate, the
    selected rank and the per-rank objective table.
sweep
    Monte Carlo rank sweep driven by a JSON config; emits one row per rank
    with the columns family, r, trials, mse_emp, mse_se, mse_theory,
    rstar_freq, pass.  A config with a ``grid`` entry instead emits the
    JSON selection-rule comparison report (norm-dependence flag included).
verify
    Runs the built-in acceptance suite and prints one pass/fail line per
    criterion; exit status 0 only if every criterion passed.

Configs are strict JSON: any unrecognized key is an error.  Exit codes:
0 success, 2 configuration/parse error, 3 estimator error (the short error
name is printed).
"""

from __future__ import annotations

import argparse
import json
import os
import sys

import numpy as np

from . import acceptance
from .errors import ConfigError, RrtlsError
from .harness import ExperimentSpec, compare_selection_rules, run
from .ls import ls_full, select_rank_ls
from .model import MeasurementModel, gaussian_model, spectrum_model
from .svdtools import order_by_scores, svd
from .textio import (
    csv_text,
    format_float,
    json_text,
    read_matrix,
    read_vector,
    write_text,
)
from .tls import augmented_scores, q_objective, tls_solve


# ---------------------------------------------------------------------------
# Strict config parsing
# ---------------------------------------------------------------------------

def _load_config(path) -> dict:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            cfg = json.load(fh)
    except OSError as err:
        raise ConfigError(f"cannot read config {path}: {err}") from err
    except json.JSONDecodeError as err:
        raise ConfigError(f"config {path} is not valid JSON: {err}") from err
    if not isinstance(cfg, dict):
        raise ConfigError(f"config {path} must be a JSON object")
    return cfg


def _check_keys(d: dict, allowed, required, context: str) -> None:
    unknown = sorted(set(d) - set(allowed))
    if unknown:
        raise ConfigError(f"unknown key(s) in {context}: {', '.join(unknown)}")
    missing = sorted(set(required) - set(d))
    if missing:
        raise ConfigError(f"missing key(s) in {context}: {', '.join(missing)}")


def _number(cfg: dict, key: str, context: str, minimum=None) -> float:
    v = cfg[key]
    if isinstance(v, bool) or not isinstance(v, (int, float)):
        raise ConfigError(f"{context}.{key} must be a number")
    v = float(v)
    if minimum is not None and v < minimum:
        raise ConfigError(f"{context}.{key} must be >= {minimum}")
    return v


def _integer(cfg: dict, key: str, context: str, minimum=None) -> int:
    v = cfg[key]
    if isinstance(v, bool) or not isinstance(v, int):
        raise ConfigError(f"{context}.{key} must be an integer")
    if minimum is not None and v < minimum:
        raise ConfigError(f"{context}.{key} must be >= {minimum}")
    return v


def _rank_policy(cfg: dict, key: str, context: str):
    v = cfg.get(key, "auto")
    if v == "auto":
        return "auto"
    if isinstance(v, bool) or not isinstance(v, int):
        raise ConfigError(f"{context}.{key} must be 'auto' or an integer")
    return v


def _theta(value, context: str) -> np.ndarray:
    if isinstance(value, str):
        return read_vector(value)
    if isinstance(value, list):
        try:
            return np.array([float(v) for v in value], dtype=float)
        except (TypeError, ValueError) as err:
            raise ConfigError(f"{context}.theta must hold numbers") from err
    raise ConfigError(f"{context}.theta must be a list of numbers or a file path")


def _build_model(cfg: dict, seed: int) -> MeasurementModel:
    _check_keys(
        cfg,
        allowed={"kind", "H", "N", "p", "spectrum", "theta", "sigma2"},
        required={"kind", "theta", "sigma2"},
        context="model",
    )
    kind = cfg["kind"]
    theta = _theta(cfg["theta"], "model")
    sigma2 = _number(cfg, "sigma2", "model", minimum=0.0)
    if kind == "explicit":
        _check_keys(cfg, {"kind", "H", "theta", "sigma2"}, {"H"}, "model(explicit)")
        H = read_matrix(cfg["H"])
        return MeasurementModel(H=H, theta=theta, sigma2=sigma2)
    if kind == "gaussian":
        _check_keys(cfg, {"kind", "N", "p", "theta", "sigma2"}, {"N", "p"}, "model(gaussian)")
        N = _integer(cfg, "N", "model", minimum=1)
        p = _integer(cfg, "p", "model", minimum=1)
        if theta.shape[0] != p:
            raise ConfigError(f"model.theta has length {theta.shape[0]}, expected p={p}")
        return gaussian_model(N=N, p=p, theta=theta, sigma2=sigma2, seed=seed)
    if kind == "spectrum":
        _check_keys(cfg, {"kind", "N", "spectrum", "theta", "sigma2"}, {"N", "spectrum"}, "model(spectrum)")
        N = _integer(cfg, "N", "model", minimum=1)
        spectrum = cfg["spectrum"]
        if not isinstance(spectrum, list) or not spectrum:
            raise ConfigError("model.spectrum must be a non-empty list of numbers")
        return spectrum_model(N=N, spectrum=spectrum, theta=theta, sigma2=sigma2, seed=seed)
    raise ConfigError(f"model.kind must be explicit, gaussian or spectrum, got {kind!r}")


# ---------------------------------------------------------------------------
# estimate
# ---------------------------------------------------------------------------

def _vector_line(label: str, v: np.ndarray) -> str:
    return f"{label}: " + " ".join(format_float(x) for x in v)


def cmd_estimate(args) -> int:
    cfg = _load_config(args.config)
    _check_keys(
        cfg,
        allowed={"family", "y", "H", "sigma2", "rank", "bound"},
        required={"family", "y", "H", "sigma2"},
        context="config",
    )
    family = cfg["family"]
    if family not in ("ls", "tls"):
        raise ConfigError(f"estimate family must be 'ls' or 'tls', got {family!r}")
    if family == "ls" and "bound" in cfg:
        raise ConfigError("'bound' is only valid for family 'tls'")
    if family == "tls" and "bound" not in cfg:
        raise ConfigError("family 'tls' requires 'bound' (the parameter-norm bound)")
    sigma2 = _number(cfg, "sigma2", "config", minimum=0.0)
    H = read_matrix(cfg["H"])
    y = read_vector(cfg["y"])
    rank_policy = _rank_policy(cfg, "rank", "config")
    p = H.shape[1]

    if family == "ls":
        est = ls_full(H, y)
        basis = order_by_scores(svd(H).U, y)
        selection = select_rank_ls(basis, sigma2, p)
        objective = selection.objective
        selected = selection.r_star
    else:
        est = tls_solve(H, y)
        basis = order_by_scores(est.retained_columns, y)
        scores = augmented_scores(basis, est.discarded_column, y)
        qobj = q_objective(scores, sigma2, p, _number(cfg, "bound", "config", minimum=0.0), "bound")
        objective = qobj.values
        selected = qobj.q_star
    if rank_policy != "auto":
        if not 1 <= rank_policy <= p:
            raise ConfigError(f"rank {rank_policy} out of range 1..{p}")
        selected = rank_policy

    lines = [
        f"family: {family}",
        _vector_line("theta_hat", est.theta_hat),
        _vector_line("x_hat", est.x_hat),
        f"selected_rank: {selected}",
        "objective:",
        "rank value",
    ]
    for i, v in enumerate(objective, start=1):
        lines.append(f"{i} {format_float(v)}")
    report = "\n".join(lines) + "\n"
    sys.stdout.write(report)
    if args.out:
        write_text(args.out, report)
    return 0


# ---------------------------------------------------------------------------
# sweep
# ---------------------------------------------------------------------------

def _result_json(res) -> dict:
    rows = [
        dict(zip(acceptance.SWEEP_HEADER, row)) for row in acceptance.sweep_rows(res)
    ]
    doc = {
        "family": res.family,
        "trials": res.trials,
        "completed": res.completed,
        "seed": res.seed,
        "failures": res.failures,
        "rows": rows,
        "auto_mse": res.auto_mse,
        "auto_se": res.auto_se,
        "sel_freq": res.sel_freq,
        "sel_freq_bias_recipe": res.sel_freq_alt,
        "tls_full_formula_mean": res.tls_full_formula_mean,
    }
    if res.moments is not None:
        m = res.moments
        doc["moments"] = {
            "n": m.n,
            "dof": m.dof,
            "mean": m.mean,
            "mean_se": m.mean_se,
            "variance": m.variance,
            "variance_se": m.variance_se,
            "mean_ok": m.mean_ok,
            "var_ok": m.var_ok,
        }
    else:
        doc["moments"] = None
    return doc


def _scores_sidecar(spec: ExperimentSpec, res) -> dict:
    doc = {
        "family": res.family,
        "sigma2": spec.model.sigma2,
        "mse_theory": res.mse_theory,
    }
    if spec.family in ("ls", "rrls"):
        basis = order_by_scores(svd(spec.model.H).U, spec.model.x)
        doc["oracle_scores"] = basis.scores
    else:
        doc["oracle_scores"] = None
    return doc


def cmd_sweep(args) -> int:
    cfg = _load_config(args.config)
    _check_keys(
        cfg,
        allowed={
            "family", "trials", "seed", "model", "rank_policy", "tls_mode",
            "grid", "out", "format", "verbosity",
        },
        required={"family", "trials", "seed", "model"},
        context="config",
    )
    family = cfg["family"]
    trials = _integer(cfg, "trials", "config", minimum=1)
    seed = args.seed if args.seed is not None else _integer(cfg, "seed", "config", minimum=0)
    fmt = args.format or cfg.get("format", "csv")
    if fmt not in ("csv", "json"):
        raise ConfigError(f"format must be csv or json, got {fmt!r}")
    out = args.out or cfg.get("out")
    verbosity = cfg.get("verbosity", 0)
    if not isinstance(verbosity, int) or isinstance(verbosity, bool):
        raise ConfigError("config.verbosity must be an integer")

    model = _build_model(cfg["model"], seed)
    tls_mode = "oracle"
    bound = None
    if "tls_mode" in cfg:
        if family not in ("tls", "rrtls"):
            raise ConfigError("'tls_mode' is only valid for families tls/rrtls")
        sub = cfg["tls_mode"]
        _check_keys(sub, {"mode", "bound"}, {"mode"}, "tls_mode")
        tls_mode = sub["mode"]
        if tls_mode == "bound":
            bound = _number(sub, "bound", "tls_mode", minimum=0.0)
        elif tls_mode != "oracle":
            raise ConfigError(f"tls_mode.mode must be oracle or bound, got {tls_mode!r}")
        elif "bound" in sub:
            raise ConfigError("tls_mode.bound is only valid with mode 'bound'")
    spec = ExperimentSpec(
        model=model,
        family=family,
        trials=trials,
        seed=seed,
        rank_policy=_rank_policy(cfg, "rank_policy", "config"),
        tls_mode=tls_mode,
        bound=bound,
    )

    if "grid" in cfg:
        if family != "rrtls":
            raise ConfigError("'grid' requires family 'rrtls'")
        if fmt != "json":
            raise ConfigError("grid comparison reports are emitted as json only")
        grid = cfg["grid"]
        if not isinstance(grid, list) or not grid:
            raise ConfigError("config.grid must be a non-empty list of numbers")
        comp = compare_selection_rules(spec, [float(g) for g in grid])
        doc = {
            "family": family,
            "trials": trials,
            "completed": comp.completed,
            "seed": seed,
            "failures": comp.failures,
            "grid": comp.grid,
            "q_star_freq": comp.q_star_freq,
            "q_star_freq_bias_recipe": comp.q_star_freq_alt,
            "theta_dependent": comp.theta_dependent,
            "witness": comp.witness,
        }
        text = json_text(doc)
        if out:
            write_text(out, text)
            if verbosity:
                print(f"wrote {out}")
        else:
            sys.stdout.write(text)
        return 0

    res = run(spec, threads=args.threads)
    if fmt == "csv":
        text = csv_text(acceptance.SWEEP_HEADER, acceptance.sweep_rows(res))
    else:
        text = json_text(_result_json(res))
    if out:
        write_text(out, text)
        stem, _ = os.path.splitext(out)
        write_text(stem + ".scores.json", json_text(_scores_sidecar(spec, res)))
        if verbosity:
            print(f"wrote {out}")
    else:
        sys.stdout.write(text)
    return 0


# ---------------------------------------------------------------------------
# verify
# ---------------------------------------------------------------------------

def cmd_verify(args) -> int:
    seed = args.seed if args.seed is not None else acceptance.DEFAULT_SEED
    report = acceptance.run_all(seed=seed, threads=args.threads)
    for result in report.results:
        print(result.line())
    if args.out:
        os.makedirs(args.out, exist_ok=True)
        files = dict(report.artifacts)
        files.update(acceptance.summary_files(report))
        for name, text in sorted(files.items()):
            write_text(os.path.join(args.out, name), text)
        print(f"wrote {len(files)} files to {args.out}")
    return 0 if report.all_passed else 1


# ---------------------------------------------------------------------------
# Entry point
# ---------------------------------------------------------------------------

def _threads_arg(value: str) -> int:
    if value == "auto":
        return os.cpu_count() or 1
    try:
        n = int(value)
    except ValueError:
        raise argparse.ArgumentTypeError("--threads expects an integer or 'auto'")
    if n < 1:
        raise argparse.ArgumentTypeError("--threads must be >= 1")
    return n


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="rrtls",
        description="Reduced-rank least-squares / total-least-squares estimation tools",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    est = sub.add_parser("estimate", help="single-shot estimation over data files")
    est.add_argument("--config", required=True)
    est.add_argument("--out", default=None)
    est.set_defaults(func=cmd_estimate)

    swp = sub.add_parser("sweep", help="Monte Carlo rank sweep / selection-rule grid")
    swp.add_argument("--config", required=True)
    swp.add_argument("--seed", type=int, default=None)
    swp.add_argument("--out", default=None)
    swp.add_argument("--format", choices=("csv", "json"), default=None)
    swp.add_argument("--threads", type=_threads_arg, default=1)
    swp.add_argument("--sequential", action="store_true",
                     help="force bit-exact sequential aggregation")
    swp.set_defaults(func=cmd_sweep)

    ver = sub.add_parser("verify", help="run the acceptance suite")
    ver.add_argument("--seed", type=int, default=None)
    ver.add_argument("--out", default=None)
    ver.add_argument("--format", choices=("csv", "json"), default=None)
    ver.add_argument("--threads", type=_threads_arg, default=1)
    ver.add_argument("--sequential", action="store_true")
    ver.set_defaults(func=cmd_verify)
    return parser


def main(argv=None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as err:
        return int(err.code) if err.code else 0
    if getattr(args, "sequential", False):
        args.threads = 1
    try:
        return args.func(args)
    except ConfigError as err:
        print(f"error: {err.code}: {err}", file=sys.stderr)
        return 2
    except RrtlsError as err:
        print(f"error: {err.code}: {err}", file=sys.stderr)
        return 3
    except ValueError as err:
        print(f"error: invalid-input: {err}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
