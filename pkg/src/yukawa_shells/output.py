"""Artifact writers and the run report renderer.

All writes go through a temp-file-plus-rename so interrupted runs never
leave partial files.  CSV is RFC-4180 (CRLF, '.' decimal, UTF-8) with frozen
column order; new columns are append-only.  JSON artifacts embed the fully
resolved configuration, so a run is reconstructible from its outputs.
"""

from __future__ import annotations

import csv
import io
import json
import math
import os
import tempfile

import numpy as np

from . import __version__
from .model import free_nucleon_energy

TRAJECTORY_COLUMNS = [
    "n", "cutoff", "energy", "gap", "gap_bound", "alpha", "delta_e",
    "norm_sq", "contraction",
    # appended diagnostics (column order above is frozen)
    "embedded_gap", "residual", "v1", "v2", "v3", "backend",
]

SWEEP_COLUMNS = [
    "value", "n_steps", "gamma", "energy", "self_energy",
    "v1", "v2", "v3", "damping_product", "damping_exponent",
    "max_contraction", "alpha_top", "status",
]


def atomic_write_text(path, text: str) -> None:
    directory = os.path.dirname(os.path.abspath(path))
    os.makedirs(directory, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".tmp-", text=True)
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _fmt(x) -> str:
    if isinstance(x, float):
        return f"{x:.17g}"
    return str(x)


def _json_default(obj):
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, (np.floating, np.integer)):
        return obj.item()
    raise TypeError(f"not JSON serializable: {type(obj)}")


def dump_json(payload: dict) -> str:
    return json.dumps(payload, indent=2, sort_keys=True, default=_json_default) + "\n"


def trajectory_payload(traj, resolved_config: dict) -> dict:
    product = exponent = None
    try:
        from .observables import damping_product

        product, exponent = damping_product(traj)
    except ValueError:
        pass
    return {
        "kind": "trajectory",
        "package": f"yukawa_shells {__version__}",
        "config": resolved_config,
        "p": traj.p.tolist(),
        "gamma": traj.params.gamma,
        "records": [
            {
                "n": r.n, "cutoff": r.cutoff, "energy": r.energy, "gap": r.gap,
                "gap_bound": r.gap_bound, "alpha": r.alpha, "delta_e": r.delta_e,
                "norm_sq": r.norm_sq, "contraction": r.contraction,
                "embedded_gap": r.embedded_gap, "residual": r.residual,
                "velocity": list(r.velocity), "backend": r.backend,
            }
            for r in traj.records
        ],
        "final_energy": traj.final_energy,
        "free_energy": free_nucleon_energy(traj.p, traj.params.m),
        "self_energy": traj.self_energy(),
        "damping_product": product,
        "damping_exponent": exponent,
        "notes": traj.notes,
        "provenance": traj.provenance,
    }


def trajectory_csv(traj) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf)  # csv default lineterminator is CRLF per RFC-4180
    writer.writerow(TRAJECTORY_COLUMNS)
    for r in traj.records:
        writer.writerow([
            r.n, _fmt(r.cutoff), _fmt(r.energy), _fmt(r.gap), _fmt(r.gap_bound),
            _fmt(r.alpha), _fmt(r.delta_e), _fmt(r.norm_sq), _fmt(r.contraction),
            _fmt(r.embedded_gap), _fmt(r.residual),
            _fmt(r.velocity[0]), _fmt(r.velocity[1]), _fmt(r.velocity[2]),
            r.backend,
        ])
    return buf.getvalue()


def sweep_row(value, traj, params, status="ok") -> dict:
    from .observables import damping_product, hf_velocity

    if traj is None:
        return {c: (math.nan if c not in ("status",) else status)
                for c in SWEEP_COLUMNS} | {"value": value, "status": status}
    v = hf_velocity(traj.final_state, traj.p, traj.final_basis, params.m)
    try:
        product, exponent = damping_product(traj)
    except ValueError:
        product, exponent = math.nan, math.nan
    contractions = [r.contraction for r in traj.records
                    if not math.isnan(r.contraction)]
    return {
        "value": value,
        "n_steps": params.n_steps,
        "gamma": params.gamma,
        "energy": traj.final_energy,
        "self_energy": traj.self_energy(),
        "v1": float(v[0]), "v2": float(v[1]), "v3": float(v[2]),
        "damping_product": product,
        "damping_exponent": exponent,
        "max_contraction": max(contractions, default=0.0),
        "alpha_top": traj.records[1].alpha if len(traj.records) > 1 else math.nan,
        "status": status,
    }


def sweep_csv(rows: list[dict]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf)
    writer.writerow(SWEEP_COLUMNS)
    for row in rows:
        writer.writerow([_fmt(row[c]) if not isinstance(row[c], str) else row[c]
                         for c in SWEEP_COLUMNS])
    return buf.getvalue()


def plot_dat(rows: list[dict], observable_column: str) -> str:
    lines = [f"{_fmt(row['value'])} {_fmt(row[observable_column])}"
             for row in rows if row["status"] == "ok"]
    return "\n".join(lines) + "\n"


def fit_payload(axis: str, fit, extras: dict, resolved_config: dict,
                failures: list) -> dict:
    payload = {
        "kind": "sweep_fit",
        "package": f"yukawa_shells {__version__}",
        "axis": axis,
        "config": resolved_config,
        "failures": failures,
    }
    if fit is not None:
        payload["fit"] = {
            "exponent": fit.exponent,
            "prefactor": fit.prefactor,
            "residual": fit.residual,
            "n_points": fit.n_points,
        }
    else:
        payload["fit"] = None
    payload.update(extras)
    return payload


# --- report -----------------------------------------------------------------

_BANDS = {
    "lambda": (0.9, 1.1),
    "g": (1.9, 2.1),
    "gamma": (0.85, 1.15),
}

_LAW = {
    "lambda": "self-energy linear in the cutoff",
    "g": "self-energy quadratic in the coupling",
    "gamma": "norm-loss element linear in the shell width",
}


def _verdict(ok: bool) -> str:
    return "PASS" if ok else "WARN"


def render_report(artifacts: dict) -> str:
    """Single markdown report from previously written artifacts.

    ``artifacts`` maps names ('config', 'trajectory', 'sweeps', 'convergence')
    to parsed payloads; missing pieces produce WARN lines but never abort.
    Rendering is deterministic: identical artifacts give identical bytes.
    """
    lines: list[str] = ["# Run report", ""]
    missing: list[str] = []

    cfg = artifacts.get("config")
    if cfg:
        lines += ["## Parameters", "", "| key | value |", "| --- | --- |"]
        for k in sorted(cfg):
            lines.append(f"| {k} | {cfg[k]} |")
        lines.append("")
    else:
        missing.append("no resolved configuration found")

    traj = artifacts.get("trajectory")
    if traj:
        lines += [
            "## Trajectory diagnostics",
            "",
            f"momentum p = {traj['p']}, shell ratio gamma = {traj['gamma']:.6g}",
            "",
            "| n | cutoff | energy | gap | gap_bound | alpha | delta_e | norm_sq |",
            "| - | ------ | ------ | --- | --------- | ----- | ------- | ------- |",
        ]
        for r in traj["records"]:
            lines.append(
                "| {n} | {cutoff:.6g} | {energy:.12g} | {gap:.6g} | {gap_bound:.6g} "
                "| {alpha:.6g} | {delta_e:.6g} | {norm_sq:.12g} |".format(**r)
            )
        lines.append("")
        energies = [r["energy"] for r in traj["records"]]
        monotone = all(b <= a + 1e-10 for a, b in zip(energies, energies[1:]))
        lines.append(f"- {_verdict(monotone)}: energy ladder non-increasing")
        gap_ok = all(r["gap"] >= r["gap_bound"] - 1e-8 for r in traj["records"])
        lines.append(f"- {_verdict(gap_ok)}: gap above its bound at every scale")
        if traj.get("damping_exponent") is not None:
            lines.append(
                f"- damping product {traj['damping_product']:.12g}, "
                f"log-slope {traj['damping_exponent']:.6g}"
            )
        if traj["notes"]:
            lines.append("")
            lines += [f"- note: {n}" for n in traj["notes"]]
        lines.append("")
    else:
        missing.append("no trajectory found")

    sweeps = artifacts.get("sweeps", {})
    lines += ["## Scaling fits", ""]
    any_fit = False
    for axis in ("lambda", "g", "gamma", "p"):
        payload = sweeps.get(axis)
        if payload is None:
            missing.append(f"no {axis} sweep found")
            continue
        any_fit = True
        fit = payload.get("fit")
        if fit is None:
            lines.append(f"- {axis} sweep: recorded, no power-law fit applies")
            continue
        band = _BANDS.get(axis)
        if band:
            ok = band[0] <= fit["exponent"] <= band[1]
            lines.append(
                f"- {_verdict(ok)}: {_LAW[axis]} — fitted exponent "
                f"{fit['exponent']:.4f} (band {band[0]}..{band[1]}, "
                f"rms residual {fit['residual']:.2e}, {fit['n_points']} points)"
            )
        else:
            lines.append(f"- {axis} sweep exponent {fit['exponent']:.4f}")
        if axis == "lambda" and payload.get("monotone_velocity") is not None:
            lines.append(
                f"- {_verdict(bool(payload['monotone_velocity']))}: "
                "velocity magnitude non-increasing along the cutoff sweep"
            )
    if not any_fit:
        lines.append("(no sweeps recorded)")
    lines.append("")

    conv = artifacts.get("convergence")
    if conv:
        lines += ["## Boson-cap convergence", "",
                  "| b_max | dim | energy | self_energy |",
                  "| ----- | --- | ------ | ----------- |"]
        for row in conv:
            lines.append(
                "| {b_max} | {dim} | {energy:.12g} | {self_energy:.12g} |".format(**row)
            )
        diffs = [abs(a["energy"] - b["energy"])
                 for a, b in zip(conv, conv[1:])]
        if len(diffs) >= 2:
            lines.append("")
            lines.append(
                f"- {_verdict(diffs[-1] <= diffs[0] + 1e-15)}: "
                "energy increments shrink with the cap "
                f"({', '.join(f'{d:.3e}' for d in diffs)})"
            )
        lines.append("")

    if missing:
        lines += ["## Missing artifacts", ""]
        lines += [f"- WARN: {m}" for m in missing]
        lines.append("")
    return "\n".join(lines)
