"""Command-line front end.

Every subcommand accepts ``--config FILE`` with ``key = value`` lines whose
keys are the long option names (dashes or underscores). Explicit flags win
over the file. Each run writes ``run-manifest.txt`` with the resolved
settings next to its outputs.

Exit codes: 0 success, 1 input error, 2 a fit did not converge (outputs are
still written).
"""
from __future__ import annotations

import argparse
import csv
import math
import sys
from pathlib import Path

import numpy as np

from . import evaluation, inference, simulation
from .grid import IngestionError, build_quadrature, dedupe_presences, read_cells_csv, read_pa_csv, standardize
from .optimize import fit
from .selection import DEFAULT_DELTA, DEFAULT_TAU_GRID, grid_search

EXIT_OK, EXIT_INPUT, EXIT_NONCONVERGED = 0, 1, 2


class InputError(Exception):
    pass


def parse_tau(text) -> float:
    text = str(text).strip().lower()
    if text in ("inf", "infinity", "+inf"):
        return math.inf
    value = float(text)
    if not value > 0:
        raise InputError(f"tau must be positive or 'inf', got {text!r}")
    return value


def parse_tau_grid(text) -> tuple:
    return tuple(parse_tau(t) for t in str(text).split(",") if t.strip())


def parse_bool(text) -> bool:
    if isinstance(text, bool):
        return text
    low = str(text).strip().lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise InputError(f"not a boolean: {text!r}")


def fmt(v) -> str:
    if isinstance(v, (tuple, list)):
        return ",".join(fmt(t) for t in v)
    if isinstance(v, float):
        return "inf" if math.isinf(v) else repr(v)
    return str(v)


# option name -> (parser, default, help)
COMMON = {
    "out": (str, ".", "output directory"),
}
DATA = {
    "cells": (str, None, "cells.csv input"),
    "area": (float, None, "study-area size (default: number of cells)"),
    "dedupe": (parse_bool, True, "clamp presence counts to 1 per cell"),
    "standardize": (parse_bool, True, "standardize covariates and bias variables"),
}
GRID = {
    "tau_grid": (parse_tau_grid, DEFAULT_TAU_GRID, "comma-separated tau candidates, 'inf' allowed"),
    "delta": (float, DEFAULT_DELTA, "RTMSPE trimming fraction"),
    "n_phi": (int, None, "number of phi values on each path (default min(20, 2p))"),
}
FIT = {
    "tau": (parse_tau, math.inf, "divergence tuning parameter, 'inf' for the MLE"),
    "phi": (float, 0.0, "L1 penalty on the slopes"),
    "max_iter": (int, 500, "iteration cap per fit"),
}
COMMANDS = {
    "fit": {**COMMON, **DATA, **FIT, "mle": (parse_bool, False, "shorthand for --tau inf --phi 0")},
    "select": {**COMMON, **DATA, **GRID},
    "predict": {**COMMON, **DATA, **FIT, **GRID,
                "select": (parse_bool, False, "choose tau and phi by RTMSPE instead of --tau/--phi")},
    "evaluate": {**COMMON, **DATA, **GRID, "pa": (str, None, "pa.csv with cell_id,label")},
    "simulate": {
        **COMMON, **GRID,
        "preset": (str, "all", "none, light, heavy or all"),
        "replicates": (int, 200, "replicates per scenario"),
        "seed": (int, 0, "base seed"),
        "n_cells": (int, 2000, "grid cells per simulated study area"),
        "jobs": (int, 1, "worker processes"),
    },
}
FLAGS = {"mle", "select", "dedupe", "standardize"}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="ppmide", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    for name, options in COMMANDS.items():
        p = sub.add_parser(name)
        p.add_argument("--config", help="key = value settings file")
        for key, (_, default, help_) in options.items():
            flag = "--" + key.replace("_", "-")
            if key in FLAGS:
                p.add_argument(flag, dest=key, nargs="?", const="true", default=None, help=help_)
                if default is True:
                    p.add_argument("--no-" + key.replace("_", "-"), dest=key, action="store_const",
                                   const="false", help=f"disable --{key}")
            else:
                p.add_argument(flag, dest=key, default=None, help=f"{help_} (default: {fmt(default)})")
    return parser


def read_config(path) -> dict:
    path = Path(path)
    if not path.exists():
        raise InputError(f"{path}: config file not found")
    out = {}
    for lineno, line in enumerate(path.read_text().splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise InputError(f"{path}:{lineno}: expected key = value")
        key, value = (s.strip() for s in line.split("=", 1))
        out[key.replace("-", "_")] = value
    return out


def resolve(command: str, args: argparse.Namespace) -> dict:
    options = COMMANDS[command]
    file_values = read_config(args.config) if args.config else {}
    unknown = sorted(set(file_values) - set(options))
    if unknown:
        raise InputError(f"unknown config keys for {command}: {', '.join(unknown)}")
    config = {}
    for key, (conv, default, _) in options.items():
        raw = getattr(args, key)
        if raw is None:
            raw = file_values.get(key)
        try:
            config[key] = default if raw is None else conv(raw)
        except (ValueError, InputError) as exc:
            raise InputError(f"bad value for {key}: {raw!r} ({exc})") from None
    return config


def write_manifest(out: Path, command: str, config: dict) -> None:
    lines = [f"command = {command}"] + [f"{k} = {fmt(v)}" for k, v in sorted(config.items())]
    (out / "run-manifest.txt").write_text("\n".join(lines) + "\n")


def load_dataset(config):
    if not config["cells"]:
        raise InputError("--cells is required")
    ds = read_cells_csv(config["cells"], config["area"])
    if config["dedupe"]:
        deduped = dedupe_presences(dict(zip(ds.cell_ids, ds.counts.tolist())))
        ds = ds.with_counts([deduped[c] for c in ds.cell_ids])
    if config["standardize"]:
        ds, _ = standardize(ds)
    return ds


def _write_fit(out: Path, res, ds, quad) -> None:
    names = ("intercept",) + ds.x_names
    with (out / "fit.csv").open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["block", "k", "name", "estimate"])
        for k, v in enumerate(res.params.beta):
            w.writerow(["beta", k, names[k], fmt(float(v))])
        for k, v in enumerate(res.params.alpha):
            w.writerow(["alpha", k, ds.z_names[k], fmt(float(v))])
        w.writerow(["meta", "", "tau", fmt(res.tau)])
        w.writerow(["meta", "", "phi", fmt(res.phi)])
        w.writerow(["meta", "", "converged", int(res.converged)])
        w.writerow(["meta", "", "iterations", res.iterations])
    with (out / "weights.csv").open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["node", "cell_id", "d", "w", "weight"])
        for i, (o, d, wt, f) in enumerate(zip(quad.origin, quad.d, quad.w, res.node_weights)):
            w.writerow([i, ds.cell_ids[o], int(d), fmt(float(wt)), fmt(float(f))])


def cmd_fit(config) -> int:
    out = Path(config["out"])
    ds = load_dataset(config)
    tau, phi = (math.inf, 0.0) if config["mle"] else (config["tau"], config["phi"])
    quad = build_quadrature(ds)
    res = fit(quad, tau, phi, max_iter=config["max_iter"])
    out.mkdir(parents=True, exist_ok=True)
    _write_fit(out, res, ds, quad)
    cov = inference.sandwich_cov(res, quad)
    inference.write_sandwich_csv(out / "sandwich.csv", cov, ["intercept", *ds.x_names])
    write_manifest(out, "fit", config)
    return EXIT_OK if res.converged else EXIT_NONCONVERGED


def _write_selection(out: Path, report) -> None:
    with (out / "selection.csv").open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["tau", "phi", "rtmspe", "selected"])
        for g in report.grid:
            w.writerow([fmt(g.tau), fmt(g.phi), fmt(g.rtmspe), int((g.tau, g.phi) == report.best)])


def cmd_select(config) -> int:
    out = Path(config["out"])
    ds = load_dataset(config)
    quad = build_quadrature(ds)
    report = grid_search(quad, ds, config["tau_grid"], config["delta"], config["n_phi"])
    out.mkdir(parents=True, exist_ok=True)
    _write_selection(out, report)
    _write_fit(out, report.best_fit, ds, quad)
    write_manifest(out, "select", config)
    return EXIT_OK if report.best_fit.converged else EXIT_NONCONVERGED


def cmd_predict(config) -> int:
    out = Path(config["out"])
    ds = load_dataset(config)
    quad = build_quadrature(ds)
    if config["select"]:
        report = grid_search(quad, ds, config["tau_grid"], config["delta"], config["n_phi"])
        res = report.best_fit
    else:
        res = fit(quad, config["tau"], config["phi"], max_iter=config["max_iter"])
    out.mkdir(parents=True, exist_ok=True)
    evaluation.write_prediction_csv(out / "prediction.csv", evaluation.predict_intensity(res, ds))
    write_manifest(out, "predict", config)
    return EXIT_OK if res.converged else EXIT_NONCONVERGED


def cmd_evaluate(config) -> int:
    out = Path(config["out"])
    ds = load_dataset(config)
    if not config["pa"]:
        raise InputError("--pa is required")
    labels = read_pa_csv(config["pa"], ds.cell_ids)
    surveyed = labels[labels >= 0]
    if len(np.unique(surveyed)) < 2:
        raise InputError(f"{config['pa']}: labels must contain both 0 and 1")
    quad = build_quadrature(ds)
    mle = fit(quad, math.inf, 0.0)
    report = grid_search(quad, ds, config["tau_grid"], config["delta"], config["n_phi"])
    mide = report.best_fit
    # presence nodes whose cell is a surveyed presence count as reliable
    flags = labels[quad.origin[quad.d == 1]] == 1
    groups = inference.weight_groups(mide, quad, flags)
    comparison = evaluation.compare_report(mle, mide, ds, labels, groups)
    out.mkdir(parents=True, exist_ok=True)
    evaluation.write_report_csvs(out, comparison)
    _write_selection(out, report)
    write_manifest(out, "evaluate", config)
    return EXIT_OK if (mle.converged and mide.converged) else EXIT_NONCONVERGED


def cmd_simulate(config) -> int:
    out = Path(config["out"])
    names = ["none", "light", "heavy"] if config["preset"] == "all" else [config["preset"]]
    if any(n not in simulation.PRESETS for n in names):
        raise InputError(f"invalid preset {config['preset']!r}; use none, light, heavy or all")
    scenarios = [simulation.preset(n, seed=config["seed"], n_cells=config["n_cells"]) for n in names]
    tables = [simulation.run_scenario(sc, None, config["replicates"], config["tau_grid"], config["delta"],
                                      config["n_phi"], n_jobs=config["jobs"]) for sc in scenarios]
    out.mkdir(parents=True, exist_ok=True)
    simulation.write_replicates_csv(out / "replicates.csv", tables)
    simulation.write_summary_csv(out / "summary.csv", tables)
    simulation.write_selection_freq_csv(out / "selection_freq.csv", tables, config["tau_grid"])
    simulation.write_scenario_record(out / "scenario.txt", scenarios)
    write_manifest(out, "simulate", {**config, **{f"gamma_{sc.name}": sc.gamma_true or "none"
                                                  for sc in scenarios}})
    failed = sum(len(t.failures) for t in tables)
    unconverged = sum(not r.converged for t in tables for r in t.rows)
    return EXIT_NONCONVERGED if failed or unconverged else EXIT_OK


HANDLERS = {"fit": cmd_fit, "select": cmd_select, "predict": cmd_predict,
            "evaluate": cmd_evaluate, "simulate": cmd_simulate}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        config = resolve(args.command, args)
        return HANDLERS[args.command](config)
    except (InputError, IngestionError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
