"""Effective velocity, scaling sweeps, damping product, and the per-shell
velocity correction terms.

The velocity operator is diagonal in the occupation basis, so its ground
state expectation is a weighted sum over basis states; an independent
finite-difference derivative of the ground energy cross-checks it.  Sweeps
over the cutoff, the coupling, the shell ratio, and the momentum feed
log-log least-squares fits whose exponents realize the model's scaling
claims at desk scale.  Universal constants are always fit outputs, never
asserted inputs.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from .errors import FitError
from .fock import Discretization, FockBasis
from .model import (
    ModelParams,
    as_momentum,
    free_nucleon_energy,
    with_gamma_target,
    with_lambda,
)
from .multiscale import Trajectory, create_on, annihilate_on, run_trajectory
from .spectral import SolverOptions, resolvent_solve


def velocity_table(basis: FockBasis, p, m: float) -> np.ndarray:
    """(dim, 3) diagonal of the velocity operator per basis state."""
    rel = as_momentum(p)[None, :] - basis.field_momenta()
    denom = np.sqrt(np.einsum("ij,ij->i", rel, rel) + m * m)
    return rel / denom[:, None]


def hf_velocity(state_hat: np.ndarray, p, basis: FockBasis, m: float) -> np.ndarray:
    """Ground-state velocity as a diagonal expectation (Hellmann-Feynman form).

    Componentwise bounded by 1 in magnitude for any state.
    """
    table = velocity_table(basis, p, m)
    w = np.asarray(state_hat) ** 2
    return w @ table


@dataclass
class VelocityResult:
    p: np.ndarray
    hf_velocity: np.ndarray
    fd_velocity: np.ndarray | None
    free_velocity: np.ndarray
    scale: int


def measure_velocity(traj: Trajectory, h: float | None = None,
                     disc: Discretization | None = None,
                     solver: SolverOptions | None = None) -> VelocityResult:
    """Velocity of the final state, optionally cross-checked by central
    differences of the ground energy with step ``h``."""
    params = traj.params
    hf = hf_velocity(traj.final_state, traj.p, traj.final_basis, params.m)
    fd = None
    if h is not None:
        d = disc or Discretization(
            **traj.provenance["discretization"])
        fd = fd_velocity(traj.p, params, d, solver, h=h,
                         backend=traj.provenance["backend"])
    free = traj.p / free_nucleon_energy(traj.p, params.m)
    return VelocityResult(p=traj.p, hf_velocity=hf, fd_velocity=fd,
                          free_velocity=free, scale=params.n_steps)


def fd_velocity_study(p, params: ModelParams, disc: Discretization,
                      solver: SolverOptions | None = None,
                      h_values=(1e-2, 5e-3), backend: str = "contour") -> dict:
    """Central differences at two steps plus the Richardson bias constant.

    Both raw gradients are retained; the constant estimates the quadratic
    bias coefficient per component, so max(1e-4, constant * h^2) is a
    defensible agreement tolerance against the diagonal expectation.
    """
    h1, h2 = sorted((float(h) for h in h_values), reverse=True)
    v1 = fd_velocity(p, params, disc, solver, h=h1, backend=backend)
    v2 = fd_velocity(p, params, disc, solver, h=h2, backend=backend)
    constant = np.abs(v1 - v2) / (h1**2 - h2**2)
    return {"h": (h1, h2), "gradients": (v1, v2),
            "richardson_constant": constant,
            "tolerance": np.maximum(1e-4, constant * h2**2)}


def fd_velocity(p, params: ModelParams, disc: Discretization,
                solver: SolverOptions | None = None, h: float = 5e-3,
                backend: str = "contour") -> np.ndarray:
    """Central-difference gradient of the final ground energy.

    Each of the six displaced energies comes from a full trajectory; the
    step must keep |p| + h below p_max.
    """
    pv = as_momentum(p)
    if np.linalg.norm(pv) + h >= params.p_max:
        raise ValueError(
            f"|p| + h = {np.linalg.norm(pv) + h:.6g} reaches p_max={params.p_max}"
        )
    out = np.zeros(3)
    for i in range(3):
        shifted = np.zeros(3)
        shifted[i] = h
        e_plus = run_trajectory(pv + shifted, params, disc, solver,
                                backend=backend).final_energy
        e_minus = run_trajectory(pv - shifted, params, disc, solver,
                                 backend=backend).final_energy
        out[i] = (e_plus - e_minus) / (2.0 * h)
    return out


@dataclass
class PowerLawFit:
    exponent: float
    prefactor: float
    residual: float     # rms of log-log fit residuals
    n_points: int


def fit_power_law(xs, ys) -> PowerLawFit:
    """Ordinary least squares on log-log axes; y = prefactor * x**exponent.

    Refused (FitError) for under-determined input or non-positive values;
    an all-zero observable is reported as "zero signal".
    """
    xs = np.asarray(xs, dtype=float)
    ys = np.asarray(ys, dtype=float)
    if xs.size != ys.size or xs.size < 2:
        raise FitError(f"power-law fit needs >= 2 points, got {xs.size}")
    if np.all(ys == 0.0):
        raise FitError("zero signal: observable vanishes at every sweep point")
    if np.any(ys <= 0.0) or np.any(xs <= 0.0):
        raise FitError("power-law fit requires strictly positive points")
    lx, ly = np.log(xs), np.log(ys)
    slope, intercept = np.polyfit(lx, ly, 1)
    fitted = slope * lx + intercept
    rms = float(np.sqrt(np.mean((ly - fitted) ** 2)))
    return PowerLawFit(float(slope), float(math.exp(intercept)), rms, int(xs.size))


@dataclass
class SweepPoint:
    value: float
    params: ModelParams
    trajectory: Trajectory | None
    observable: float
    error: str | None = None


@dataclass
class SweepResult:
    axis: str
    points: list[SweepPoint]
    fit: PowerLawFit | None
    extras: dict


def _sweep_trajectories(param_list, p, disc, solver, backend, map_fn):
    jobs = [(pp, p, disc, solver, backend) for pp in param_list]
    return list(map_fn(_run_point, jobs))


def _run_point(job):
    pp, p, disc, solver, backend = job
    return run_trajectory(p, pp, disc, solver, backend=backend)


def self_energy_sweep(params: ModelParams, lambda_values, disc: Discretization,
                      solver: SolverOptions | None = None, p=(0.0, 0.0, 0.0),
                      backend: str = "contour", map_fn=map) -> SweepResult:
    """Interaction-induced ground-energy depression against the cutoff.

    Each cutoff keeps (approximately) the base shell ratio and the same
    per-shell quadrature density.  The fit is the log-log exponent of
    sqrt(p^2 + m^2) - E_final versus the cutoff.
    """
    lambda_values = sorted(float(x) for x in lambda_values)
    if len(lambda_values) < 4:
        raise FitError(f"sweep needs >= 4 points, got {len(lambda_values)}")
    param_list = [with_lambda(params, lam) for lam in lambda_values]
    trajs = _sweep_trajectories(param_list, p, disc, solver, backend, map_fn)
    points = [
        SweepPoint(lam, pp, tr, tr.self_energy())
        for lam, pp, tr in zip(lambda_values, param_list, trajs)
    ]
    fit = fit_power_law(lambda_values, [pt.observable for pt in points])
    g = params.g
    extras = {"observable": "self_energy",
              "prefactor_over_g2": fit.prefactor / (g * g) if g else math.inf}
    return SweepResult("lambda", points, fit, extras)


def coupling_sweep(params: ModelParams, g_values, disc: Discretization,
                   solver: SolverOptions | None = None, p=(0.0, 0.0, 0.0),
                   backend: str = "contour", map_fn=map) -> SweepResult:
    """Self-energy against the coupling at fixed cutoff; exponent near 2."""
    g_values = sorted(float(x) for x in g_values)
    if len(g_values) < 4:
        raise FitError(f"sweep needs >= 4 points, got {len(g_values)}")
    param_list = [replace(params, g=gv) for gv in g_values]
    trajs = _sweep_trajectories(param_list, p, disc, solver, backend, map_fn)
    points = [
        SweepPoint(gv, pp, tr, tr.self_energy())
        for gv, pp, tr in zip(g_values, param_list, trajs)
    ]
    fit = fit_power_law(g_values, [pt.observable for pt in points])
    extras = {
        "observable": "self_energy",
        "max_contraction": max(
            max((r.contraction for r in tr.records if not math.isnan(r.contraction)),
                default=0.0)
            for tr in trajs
        ),
    }
    return SweepResult("g", points, fit, extras)


def ratio_sweep(params: ModelParams, gamma_targets, disc: Discretization,
                solver: SolverOptions | None = None, p=(0.0, 0.0, 0.2),
                backend: str = "contour", map_fn=map) -> SweepResult:
    """Top-shell norm-loss element against the shell width factor (1 - gamma)."""
    gamma_targets = sorted(float(x) for x in gamma_targets)
    param_list = [with_gamma_target(params, gt) for gt in gamma_targets]
    trajs = _sweep_trajectories(param_list, p, disc, solver, backend, map_fn)
    widths = [1.0 - pp.gamma for pp in param_list]
    alphas = [tr.records[1].alpha for tr in trajs]
    points = [
        SweepPoint(w, pp, tr, a)
        for w, pp, tr, a in zip(widths, param_list, trajs, alphas)
    ]
    fit = fit_power_law(widths, alphas) if len(points) >= 2 else None
    extras = {"observable": "alpha_top_shell",
              "gammas": [pp.gamma for pp in param_list]}
    return SweepResult("gamma", points, fit, extras)


def momentum_sweep(params: ModelParams, p_values, disc: Discretization,
                   solver: SolverOptions | None = None,
                   direction=(0.0, 0.0, 1.0), backend: str = "contour",
                   map_fn=map) -> SweepResult:
    """Final velocity along a fixed direction against the momentum magnitude."""
    p_values = sorted(float(x) for x in p_values)
    d = as_momentum(direction)
    d = d / np.linalg.norm(d)
    param_list = [params] * len(p_values)
    jobs = [(params, tuple(pv * d), disc, solver, backend) for pv in p_values]
    trajs = list(map_fn(_run_point, jobs))
    points = []
    for pv, tr in zip(p_values, trajs):
        v = hf_velocity(tr.final_state, tr.p, tr.final_basis, params.m)
        points.append(SweepPoint(pv, params, tr, float(v @ d)))
    extras = {"observable": "velocity_along_direction", "direction": d.tolist()}
    return SweepResult("p", points, fit=None, extras=extras)


def damping_product(trajectory: Trajectory) -> tuple[float, float]:
    """Product of (1 - g^2 * alpha_n) over all shells, and its log-slope.

    The second value, log(product)/log(cutoff), is an empirical estimate of
    the (negative) damping exponent of the free velocity.  A non-positive
    factor aborts: the coupling is far outside the regime where the product
    makes sense.
    """
    g2 = trajectory.params.g ** 2
    product = 1.0
    for rec in trajectory.records:
        if rec.n == 0:
            continue
        factor = 1.0 - g2 * rec.alpha
        if factor <= 0.0:
            raise ValueError(
                f"damping factor 1 - g^2*alpha = {factor:.3e} at scale {rec.n}; "
                "coupling far outside the contractive regime"
            )
        product *= factor
    exponent = math.log(product) / math.log(trajectory.params.lambda_)
    return product, exponent


@dataclass
class FlatteningResult:
    sweep: SweepResult
    monotone: bool               # velocity non-increasing within tolerance
    damping_exponents: list[float]
    fitted_c1: float | None
    fitted_floor: float | None


def flattening_sweep(params: ModelParams, lambda_values, disc: Discretization,
                     solver: SolverOptions | None = None, p=(0.0, 0.0, 0.2),
                     backend: str = "contour", map_fn=map,
                     monotone_tol: float = 1e-3) -> FlatteningResult:
    """Final-state velocity magnitude against the cutoff at fixed momentum.

    Reports the monotone-decrease verdict, per-point damping exponents, and
    a two-parameter fit of |v| = v_free * lambda^(-g^2 c1) + floor.
    """
    lambda_values = sorted(float(x) for x in lambda_values)
    if len(lambda_values) < 4:
        raise FitError(f"sweep needs >= 4 points, got {len(lambda_values)}")
    pv = as_momentum(p)
    if np.linalg.norm(pv) == 0.0:
        raise ValueError("flattening sweep needs a non-zero momentum")
    param_list = [with_lambda(params, lam) for lam in lambda_values]
    trajs = _sweep_trajectories(param_list, pv, disc, solver, backend, map_fn)
    speeds, exponents = [], []
    for tr in trajs:
        v = hf_velocity(tr.final_state, tr.p, tr.final_basis, params.m)
        speeds.append(float(np.linalg.norm(v)))
        exponents.append(damping_product(tr)[1])
    points = [
        SweepPoint(lam, pp, tr, s)
        for lam, pp, tr, s in zip(lambda_values, param_list, trajs, speeds)
    ]
    monotone = all(
        speeds[i + 1] <= speeds[i] + monotone_tol for i in range(len(speeds) - 1)
    )
    v_free = float(np.linalg.norm(pv)) / free_nucleon_energy(pv, params.m)
    c1, floor = _fit_damping_curve(lambda_values, speeds, v_free, params.g)
    sweep = SweepResult("lambda", points, fit=None,
                        extras={"observable": "velocity_magnitude",
                                "v_free": v_free})
    return FlatteningResult(sweep, monotone, exponents, c1, floor)


def _fit_damping_curve(lams, speeds, v_free, g):
    """Least-squares (c1, floor) for v_free * lam^(-g^2 c1) + floor."""
    from scipy.optimize import curve_fit

    lams = np.asarray(lams, dtype=float)
    speeds = np.asarray(speeds, dtype=float)

    def model(lam, c1, floor):
        return v_free * lam ** (-(g * g) * c1) + floor

    try:
        popt, _ = curve_fit(model, lams, speeds, p0=(1.0, 0.0),
                            bounds=([0.0, 0.0], [np.inf, 1.0]), maxfev=10000)
        return float(popt[0]), float(popt[1])
    except (RuntimeError, ValueError):
        return None, None


def velocity_correction_terms(state_hat, op_prev, e_prev, shell_n,
                              params: ModelParams, *, tol_lin: float = 1e-12,
                              ground_vec=None) -> tuple[np.ndarray, np.ndarray]:
    """Per-shell direct and cross velocity correction terms (3-vectors each).

    The direct term weighs the velocity diagonal with the one-extra-boson
    resolvent image; the cross term pairs the second-order correction of the
    state, with the ground direction projected out, against the velocity of
    the state itself.  Both vanish at zero coupling and at zero momentum on
    parity-symmetric mode sets.
    """
    basis = op_prev.basis
    mode_set = basis.mode_set
    g2 = params.g ** 2
    vtab = velocity_table(basis, op_prev.p, params.m)
    psi = np.asarray(state_hat, dtype=float)
    direct = np.zeros(3)
    second_order = np.zeros(basis.dim)
    for j in mode_set.modes_in_shell(shell_n):
        u = create_on(basis, psi, j)
        if not np.any(u):
            continue
        x = resolvent_solve(op_prev, e_prev, u, tol=tol_lin, project_out=ground_vec)
        w_f2 = mode_set.weights[j] * mode_set.form[j] ** 2
        direct += g2 * w_f2 * ((x * x) @ vtab)
        second_order += w_f2 * annihilate_on(basis, x, j)
    # project onto the complement of the ground direction, then resolve again
    ref = psi if ground_vec is None else ground_vec
    second_order -= ref * (ref @ second_order)
    y = resolvent_solve(op_prev, e_prev, second_order, tol=tol_lin,
                        project_out=ref)
    y -= ref * (ref @ y)
    cross = 2.0 * g2 * ((y * psi) @ vtab)
    return direct, np.asarray(cross)


def auxiliary_scale(params: ModelParams, shell_n: int, g: float,
                    epsilon: float) -> float:
    """Ladder point just below min(cutoff, cutoff*gamma^(n-1)/|g|^epsilon).

    Diagnostic energy level for the one-step backwards re-expansion; snapped
    onto the ladder from below.
    """
    if not 0.0 < epsilon <= 0.5:
        raise ValueError(f"epsilon must lie in (0, 1/2], got {epsilon}")
    if g == 0.0:
        return params.lambda_
    gamma = params.gamma
    target = min(params.lambda_,
                 params.lambda_ * gamma ** (shell_n - 1) / abs(g) ** epsilon)
    ratio = target / params.lambda_
    ell = max(0, math.ceil(math.log(ratio) / math.log(gamma) - 1e-12))
    return params.lambda_ * gamma**ell


def boson_cap_scan(params: ModelParams, disc: Discretization,
                   solver: SolverOptions | None = None, p=(0.0, 0.0, 0.2),
                   caps=(1, 2, 3), backend: str = "contour") -> list[dict]:
    """Final energy under increasing boson caps, for truncation-convergence
    reporting on a reduced grid."""
    rows = []
    for cap in caps:
        d = replace(disc, b_max=int(cap))
        tr = run_trajectory(p, params, d, solver, backend=backend)
        rows.append({
            "b_max": int(cap),
            "dim": tr.final_basis.dim,
            "energy": tr.final_energy,
            "self_energy": tr.self_energy(),
        })
    return rows
