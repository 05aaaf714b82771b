"""Operator-facing command line: config-driven simulation, estimation,
deterministic solves, inequality verification, and lambda sweeps.

Outputs land in outdir/{manifest.json, data/*.csv, reports/*.json}; given the
same config and seed every emitted byte except the manifest timestamp is
identical, independent of the worker count.
"""

from __future__ import annotations

import argparse
import csv
import json
import math
import os
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__
from .model import ModelParams, Modulator, Payoff, PhaseState, Potential
from .mc import (ResolventQuery, estimate_chain_coins, estimate_chain_weights,
                 estimate_exp_weight, estimate_killing, write_results_csv)
from .grids import MomentumGrid, solve_momentum_resolvent
from .harness import (BoundReport, check_drift_full, check_drift_skeleton,
                      check_homogenization_error, check_high_energy_passage,
                      check_low_energy_average, check_skeleton_tail, check_main_bound,
                      write_probe_csv, write_report_json)
from .sampling import RandomStream
from .simulate import SimConfig, simulate_full

_ESTIMATORS = {
    "killing": estimate_killing,
    "exp_weight": estimate_exp_weight,
    "chain_weights": estimate_chain_weights,
    "chain_coins": estimate_chain_coins,
}

CONFIG_SCHEMA = {
    "model": {"lambda": float, "potential": str, "v0": float},
    "task": str,
    "seed": int,
    "workers": int,
    "simulate": {"x0": float, "p0": float, "horizon": float, "record_vacuous": bool},
    "estimate": {"x0": float, "p0": float, "estimator": str, "n_paths": int,
                 "payoff": list, "payoff_kind": str},
    "solve": {"payoff": list, "payoff_kind": str, "p_probes": list},
    "verify": {"checks": list, "lambdas": list, "n_paths": int, "ceiling": float},
    "sweep": {"lambdas": list, "checks": list, "n_paths": int, "ceiling": float},
}


class ConfigError(ValueError):
    pass


def _check_keys(cfg: dict, schema: dict, prefix: str = ""):
    for key, val in cfg.items():
        if key not in schema:
            raise ConfigError(f"unknown config key: {prefix}{key}")
        want = schema[key]
        if isinstance(want, dict):
            if not isinstance(val, dict):
                raise ConfigError(f"{prefix}{key} must be an object")
            _check_keys(val, want, prefix + key + ".")
        elif want in (int, float):
            if not isinstance(val, (int, float)) or isinstance(val, bool):
                raise ConfigError(f"{prefix}{key} must be a number")
        elif want is bool:
            if not isinstance(val, bool):
                raise ConfigError(f"{prefix}{key} must be a boolean")
        elif want is str:
            if not isinstance(val, str):
                raise ConfigError(f"{prefix}{key} must be a string")
        elif want is list:
            if not isinstance(val, list):
                raise ConfigError(f"{prefix}{key} must be a list")


def load_config(path: str, overrides=()) -> dict:
    try:
        with open(path) as fh:
            cfg = json.load(fh)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}:{exc.lineno}:{exc.colno}: {exc.msg}") from exc
    for item in overrides:
        if "=" not in item:
            raise ConfigError(f"--set needs key=value, got {item!r}")
        key, _, raw = item.partition("=")
        try:
            val = json.loads(raw)
        except json.JSONDecodeError:
            val = raw
        node = cfg
        parts = key.split(".")
        for part in parts[:-1]:
            node = node.setdefault(part, {})
        node[parts[-1]] = val
    _check_keys(cfg, CONFIG_SCHEMA)
    if "task" not in cfg:
        raise ConfigError("config needs a task")
    if cfg["task"] not in ("simulate", "estimate", "solve", "verify", "sweep"):
        raise ConfigError(f"unknown task {cfg['task']!r}")
    return cfg


def build_params(cfg: dict) -> ModelParams:
    model = cfg.get("model", {})
    kind = model.get("potential", "zero")
    if kind == "zero":
        pot = Potential.zero()
    elif kind == "cosine":
        pot = Potential.cosine(model.get("v0", 1.0))
    else:
        raise ConfigError(f"unknown potential {kind!r} (zero | cosine)")
    return ModelParams(lam=model.get("lambda", 0.25), potential=pot)


def _payoff_from(section: dict) -> Payoff:
    kind = section.get("payoff_kind", "p_band")
    band = section.get("payoff", [1.0, 3.0])
    if kind == "p_band":
        return Payoff.indicator_band(band[0], band[1])
    if kind == "h_band":
        return Payoff.energy_band(band[0], band[1])
    if kind == "zero":
        return Payoff.constant(0.0)
    raise ConfigError(f"unknown payoff kind {kind!r}")


def task_simulate(cfg, params, outdir, seed, workers):
    sec = cfg.get("simulate", {})
    stream = RandomStream(seed, stream_id=0)
    traj = simulate_full(PhaseState(sec.get("x0", 0.0), sec.get("p0", 2.0)),
                         sec.get("horizon", 100.0), params, SimConfig(), stream,
                         record_vacuous=sec.get("record_vacuous", False))
    traj.write_csv(outdir / "data" / "trajectory.csv")
    return 0


def task_estimate(cfg, params, outdir, seed, workers):
    sec = cfg.get("estimate", {})
    payoff = _payoff_from(sec)
    q = ResolventQuery(start=PhaseState(sec.get("x0", 0.0), sec.get("p0", 2.0)),
                       modulator=Modulator.energy_indicator(), payoff=payoff,
                       estimator=sec.get("estimator", "killing"),
                       n_paths=sec.get("n_paths", 4096), seed=seed, workers=workers)
    est = _ESTIMATORS[q.estimator](q, params)
    write_results_csv(outdir / "data" / "estimates.csv", [("q0", q.estimator, est)])
    return 0


def task_solve(cfg, params, outdir, seed, workers):
    sec = cfg.get("solve", {})
    payoff = _payoff_from(sec)
    if params.potential.sup_v != 0.0:
        raise ConfigError("the deterministic solve task runs the momentum-only model")
    sq2l = math.sqrt(2.0 * params.l)
    breaks = [sq2l, payoff.a, payoff.b]
    grid = MomentumGrid.default_for(params.lam, breakpoints=breaks)
    h = lambda p: 1.0 if abs(p) <= sq2l else 0.0
    f = lambda p: payoff.eval(0.0, p, params)
    sol = solve_momentum_resolvent(params.lam, h, f, grid)
    with open(outdir / "data" / "resolvent_nodes.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["p", "u"])
        for p, u in zip(sol.grid.nodes, sol.u):
            w.writerow([f"{p:.17g}", f"{u:.17g}"])
    # supporting kernel grid for downstream plotting
    from .model import jump_kernel

    pg = np.linspace(-6.0, 6.0, 61)
    with open(outdir / "data" / "kernel_grid.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["p", "p_prime", "value"])
        for p in pg:
            for q2 in pg:
                w.writerow([f"{p:.17g}", f"{q2:.17g}",
                            f"{float(jump_kernel(params.lam, p, q2)):.17g}"])
    with open(outdir / "reports" / "solve_residual.json", "w") as fh:
        json.dump({"residual": sol.residual, "tail_mass": sol.tail_mass,
                   "n_nodes": len(sol.grid.nodes)}, fh, indent=1, sort_keys=True)
    return 0


def _run_checks(cfg_sec, params, outdir, seed, workers):
    checks = cfg_sec.get("checks", ["main_bound", "drift_full", "drift_skeleton"])
    lambdas = tuple(cfg_sec.get("lambdas", [0.5, 0.25, 0.125, 0.0625]))
    ceiling = cfg_sec.get("ceiling", 1.5)
    n_paths = cfg_sec.get("n_paths", 20000)
    zero = ModelParams(lam=params.lam, potential=Potential.zero())
    reports: list[BoundReport] = []
    for name in checks:
        if name == "main_bound":
            reports.extend(check_main_bound(zero, lambdas=lambdas, ceiling=ceiling).values())
        elif name == "drift_full":
            reports.append(check_drift_full(zero, lambdas=lambdas))
        elif name == "drift_skeleton":
            reports.append(check_drift_skeleton(params, lambdas=lambdas,
                                                probe_mults=(2.0, 3.0, 4.0)))
        elif name == "low_energy":
            reports.append(check_low_energy_average(zero, lambdas=lambdas, seed=seed, ceiling=ceiling))
        elif name == "homogenization":
            reports.append(check_homogenization_error(
                params if params.potential.sup_v > 0
                else ModelParams(lam=params.lam, potential=Potential.cosine(1.0)),
                lambdas=tuple(l for l in lambdas if l >= 0.1) or (0.5, 0.25),
                n_paths=n_paths, seed=seed, ceiling=ceiling, workers=workers))
        elif name == "high_energy":
            reports.append(check_high_energy_passage(zero, lambdas=tuple(l for l in lambdas if l >= 0.1),
                                           n_paths=max(2000, n_paths // 4), seed=seed,
                                           ceiling=ceiling, workers=workers))
        elif name == "skeleton_tail":
            reports.append(check_skeleton_tail(zero, lam=min(lambdas), rho0=6.0,
                                               n_paths=n_paths, seed=seed))
        else:
            raise ConfigError(f"unknown check {name!r}")
    for rep in reports:
        write_report_json(rep, outdir / "reports" / f"{rep.inequality_id}.json")
        write_probe_csv(rep, outdir / "data" / f"{rep.inequality_id}_probes.csv")
    return reports


def task_verify(cfg, params, outdir, seed, workers):
    reports = _run_checks(cfg.get("verify", {}), params, outdir, seed, workers)
    return 0 if all(r.passed for r in reports) else 2


def task_sweep(cfg, params, outdir, seed, workers):
    sec = cfg.get("sweep", {})
    if "lambdas" not in sec:
        raise ConfigError("sweep needs sweep.lambdas")
    reports = _run_checks(sec, params, outdir, seed, workers)
    rows = [row for rep in reports for row in rep.rows()]
    with open(outdir / "data" / "c_hat_table.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["inequality_id", "lambda", "c_hat", "ratio", "pass"])
        for row in rows:
            w.writerow([row["inequality_id"], f"{row['lambda']:.17g}",
                        f"{row['c_hat']:.17g}",
                        "" if row["ratio"] is None else f"{row['ratio']:.17g}",
                        int(row["pass"])])
    return 0 if all(r.passed for r in reports) else 2


TASKS = {"simulate": task_simulate, "estimate": task_estimate, "solve": task_solve,
         "verify": task_verify, "sweep": task_sweep}


def run(config_path: str, seed=None, workers=None, outdir="out", overrides=()) -> int:
    try:
        cfg = load_config(config_path, overrides)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 1
    params = build_params(cfg)
    seed = cfg.get("seed", 0) if seed is None else seed
    if workers is None:
        workers = cfg.get("workers", int(os.environ.get("RESOLVENT_LAB_WORKERS", "1")))
    out = Path(outdir)
    (out / "data").mkdir(parents=True, exist_ok=True)
    (out / "reports").mkdir(parents=True, exist_ok=True)
    manifest = {"config": cfg, "seed": seed, "workers": workers,
                "version": __version__, "timestamp": time.time()}
    with open(out / "manifest.json", "w") as fh:
        json.dump(manifest, fh, indent=1, sort_keys=True)
    try:
        return TASKS[cfg["task"]](cfg, params, out, seed, workers)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 1


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(prog="resolvent-lab",
                                 description="simulate, estimate, solve and verify "
                                             "the thermostatted-particle model")
    ap.add_argument("--config", required=True, help="JSON config path")
    ap.add_argument("--seed", type=int, default=None)
    ap.add_argument("--workers", type=int, default=None)
    ap.add_argument("--outdir", default="out")
    ap.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                    help="dotted-path config override (repeatable)")
    args = ap.parse_args(argv)
    return run(args.config, seed=args.seed, workers=args.workers,
               outdir=args.outdir, overrides=args.set)


if __name__ == "__main__":
    sys.exit(main())
