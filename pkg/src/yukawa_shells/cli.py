"""Command-line entry point: validate, trajectory, sweep, report.

Runs are batch computations; every output embeds the resolved configuration
and seed.  Sweep points run on a worker pool sized by --jobs; all file
writes happen on the coordinating process.
"""

from __future__ import annotations

import argparse
import json
import math
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import replace

from . import observables
from .config import RunConfig, parse_config_file
from .errors import ConfigError, FitError, TrajectoryError
from .model import validate, validation_notes, with_gamma_target, with_lambda
from .multiscale import run_trajectory
from .output import (
    atomic_write_text,
    dump_json,
    fit_payload,
    plot_dat,
    render_report,
    sweep_csv,
    sweep_row,
    trajectory_csv,
    trajectory_payload,
)

_OBSERVABLE_COLUMN = {"lambda": "self_energy", "g": "self_energy",
                      "gamma": "alpha_top", "p": "v3"}


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="yukawa-shells",
        description="Shell-by-shell ground-state construction for the cutoff "
                    "one-particle Yukawa model",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, needs_config=True):
        if needs_config:
            p.add_argument("--config", required=True, help="flat key=value file")
        p.add_argument("--out", default=None,
                       help="output directory (default: $YUKAWA_SHELLS_OUT or '.')")
        p.add_argument("--jobs", type=int, default=1, help="worker pool size")
        p.add_argument("--backend", choices=("contour", "neumann"), default=None,
                       help="override the projector backend")
        p.add_argument("--strict-gap", choices=("warn", "error"), default=None,
                       help="override the gap-bound violation policy")

    common(sub.add_parser("validate", help="check parameter constraints"))
    common(sub.add_parser("trajectory", help="run one scale-by-scale trajectory"))
    swp = sub.add_parser("sweep", help="run a parameter sweep with fits")
    common(swp)
    swp.add_argument("--axis", choices=("lambda", "g", "gamma", "p"), default=None,
                     help="override the sweep axis")
    rep = sub.add_parser("report", help="render a markdown report from artifacts")
    common(rep, needs_config=False)
    return parser


def _out_dir(args) -> str:
    return args.out or os.environ.get("YUKAWA_SHELLS_OUT") or "."


def _load_config(args) -> RunConfig:
    cfg = parse_config_file(args.config)
    if args.backend:
        cfg.values["backend"] = args.backend
    if getattr(args, "strict_gap", None):
        cfg.values["strict_gap"] = args.strict_gap
    if getattr(args, "axis", None):
        cfg.values["sweep_axis"] = args.axis
    return cfg


def cmd_validate(args) -> int:
    cfg = _load_config(args)
    params = cfg.model_params()
    violations = validate(params)
    checks = [
        ("m > 0", params.m > 0),
        ("mu > 1 (or explicit override)", params.mu > 1 or params.allow_small_mu),
        ("|g| <= 1", abs(params.g) <= 1),
        ("lambda > 1", params.lambda_ > 1),
        ("0 < kappa < lambda", 0 < params.kappa < params.lambda_),
        ("gamma in (1/2, 1)", 0.5 < params.gamma < 1.0),
        ("0 < p_max < 1/2", 0 < params.p_max < 0.5),
        ("1/8 < theta < 1/4", 0.125 < params.theta < 0.25),
        ("zeta > 1/4", params.zeta > 0.25),
        ("1 - theta - p_max >= zeta",
         1 - params.theta - params.p_max >= params.zeta),
    ]
    for name, ok in checks:
        print(f"{'PASS' if ok else 'FAIL'}: {name}")
    pnorm = math.sqrt(sum(x * x for x in cfg.p))
    print(f"{'PASS' if pnorm < params.p_max else 'FAIL'}: |p| < p_max "
          f"({pnorm:.6g} vs {params.p_max})")
    if pnorm >= params.p_max:
        violations.append(f"|p| < p_max required (got |p|={pnorm:.6g})")
    for note in validation_notes(params):
        print(f"NOTE: {note}")
    for v in violations:
        print(f"violation: {v}")
    return 1 if violations else 0


def cmd_trajectory(args) -> int:
    cfg = _load_config(args)
    params = cfg.model_params()
    problems = validate(params)
    if problems:
        for v in problems:
            print(f"violation: {v}", file=sys.stderr)
        return 1
    out = _out_dir(args)
    try:
        traj = run_trajectory(
            cfg.p, params, cfg.discretization(), cfg.solver_options(),
            backend=cfg["backend"], strict_gap=cfg["strict_gap"],
        )
    except TrajectoryError as err:
        print(f"error: {err}", file=sys.stderr)
        return 1
    resolved = cfg.resolved_dict()
    scan_rows = None
    if cfg["b_max_scan"]:
        scan_rows = observables.boson_cap_scan(
            params, cfg.discretization(), cfg.solver_options(), p=cfg.p,
            caps=cfg["b_max_scan"], backend=cfg["backend"],
        )
    atomic_write_text(os.path.join(out, "run_config.json"), dump_json(resolved))
    atomic_write_text(os.path.join(out, "trajectory.json"),
                      dump_json(trajectory_payload(traj, resolved)))
    atomic_write_text(os.path.join(out, "trajectory.csv"), trajectory_csv(traj))
    if scan_rows is not None:
        atomic_write_text(os.path.join(out, "convergence.json"),
                          dump_json({"kind": "boson_cap_scan", "rows": scan_rows,
                                     "config": resolved}))
    for r in traj.records:
        print(f"n={r.n:3d} cutoff={r.cutoff:10.6g} energy={r.energy:.12g} "
              f"gap={r.gap:10.6g} norm_sq={r.norm_sq:.9g}")
    for note in traj.notes:
        print(f"note: {note}")
    return 0


def _point_params(cfg: RunConfig, axis: str, value: float):
    params = cfg.model_params()
    p = cfg.p
    if axis == "lambda":
        return with_lambda(params, value), p
    if axis == "g":
        return replace(params, g=value), p
    if axis == "gamma":
        return with_gamma_target(params, value), p
    if axis == "p":
        base = cfg.p
        norm = math.sqrt(sum(x * x for x in base))
        direction = (0.0, 0.0, 1.0) if norm == 0 else tuple(x / norm for x in base)
        return params, tuple(value * d for d in direction)
    raise ValueError(f"unknown axis {axis!r}")


def _sweep_worker(job):
    """Runs one sweep point; lives at module top level for process pools."""
    value, resolved, axis = job
    from .config import config_from_dict

    cfg = config_from_dict(resolved)
    params, p = _point_params(cfg, axis, value)
    traj = run_trajectory(p, params, cfg.discretization(), cfg.solver_options(),
                          backend=cfg["backend"], strict_gap=cfg["strict_gap"])
    return sweep_row(value, traj, params)


def cmd_sweep(args) -> int:
    cfg = _load_config(args)
    axis = cfg["sweep_axis"]
    values = list(cfg["sweep_values"])
    if len(values) < 4:
        print(f"error: sweep needs >= 4 points, got {len(values)}", file=sys.stderr)
        return 1
    out = _out_dir(args)
    resolved = cfg.resolved_dict()
    jobs = [(v, resolved, axis) for v in values]
    rows, failures = [], []
    if args.jobs > 1:
        with ProcessPoolExecutor(max_workers=args.jobs) as pool:
            results = list(pool.map(_try_sweep_worker, jobs))
    else:
        results = [_try_sweep_worker(j) for j in jobs]
    for (value, _, _), (row, err) in zip(jobs, results):
        if err is not None:
            failures.append({"value": value, "error": err})
            rows.append(sweep_row(value, None, None, status="failed"))
            print(f"point {axis}={value}: FAILED ({err})", file=sys.stderr)
        else:
            rows.append(row)
            print(f"point {axis}={value}: energy={row['energy']:.12g} "
                  f"self_energy={row['self_energy']:.6g}")
    ok_rows = [r for r in rows if r["status"] == "ok"]
    fit = None
    extras = {"observable": _OBSERVABLE_COLUMN[axis]}
    try:
        if axis in ("lambda", "g"):
            fit = observables.fit_power_law(
                [r["value"] for r in ok_rows], [r["self_energy"] for r in ok_rows])
            if axis == "lambda":
                speeds = [math.sqrt(r["v1"] ** 2 + r["v2"] ** 2 + r["v3"] ** 2)
                          for r in ok_rows]
                extras["monotone_velocity"] = all(
                    b <= a + 1e-3 for a, b in zip(speeds, speeds[1:]))
        elif axis == "gamma":
            fit = observables.fit_power_law(
                [1.0 - r["gamma"] for r in ok_rows],
                [r["alpha_top"] for r in ok_rows])
    except FitError as err:
        extras["fit_refused"] = str(err)
    atomic_write_text(os.path.join(out, "run_config.json"), dump_json(resolved))
    atomic_write_text(os.path.join(out, "sweep.csv"), sweep_csv(rows))
    atomic_write_text(os.path.join(out, "fit.json"),
                      dump_json(fit_payload(axis, fit, extras, resolved, failures)))
    atomic_write_text(os.path.join(out, "plot.dat"),
                      plot_dat(rows, _OBSERVABLE_COLUMN[axis]))
    if fit is not None:
        print(f"fit: exponent={fit.exponent:.4f} prefactor={fit.prefactor:.6g} "
              f"rms={fit.residual:.2e}")
    return 1 if len(failures) * 4 > len(values) else 0


def _try_sweep_worker(job):
    try:
        return _sweep_worker(job), None
    except Exception as err:  # per-point failures must not kill the sweep
        return None, f"{type(err).__name__}: {err}"


def cmd_report(args) -> int:
    out = _out_dir(args)
    artifacts: dict = {"sweeps": {}}

    def read_json(name):
        path = os.path.join(out, name)
        if os.path.exists(path):
            with open(path, "r", encoding="utf-8") as fh:
                return json.load(fh)
        return None

    cfg = read_json("run_config.json")
    if cfg:
        artifacts["config"] = cfg
    traj = read_json("trajectory.json")
    if traj:
        artifacts["trajectory"] = traj
    conv = read_json("convergence.json")
    if conv:
        artifacts["convergence"] = conv["rows"]
    fit = read_json("fit.json")
    if fit:
        artifacts["sweeps"][fit["axis"]] = fit
    for entry in sorted(os.listdir(out)) if os.path.isdir(out) else []:
        sub = os.path.join(out, entry, "fit.json")
        if entry.startswith("sweep_") and os.path.exists(sub):
            with open(sub, "r", encoding="utf-8") as fh:
                payload = json.load(fh)
            artifacts["sweeps"][payload["axis"]] = payload
    report = render_report(artifacts)
    atomic_write_text(os.path.join(out, "report.md"), report)
    print(report)
    return 0


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        if args.command == "validate":
            return cmd_validate(args)
        if args.command == "trajectory":
            return cmd_trajectory(args)
        if args.command == "sweep":
            return cmd_sweep(args)
        if args.command == "report":
            return cmd_report(args)
    except ConfigError as err:
        print(f"config error: {err}", file=sys.stderr)
        return 2
    raise AssertionError("unreachable")


if __name__ == "__main__":
    sys.exit(main())
