"""Scale-by-scale ground-state construction.

Starting from the vacuum on the empty ladder, each step n couples one more
interaction shell and pushes the previous ground state through a spectral
projector around the previous ground energy.  The ground energy itself is
always recomputed by an independent eigensolve of the full operator, so the
projector path and the energy path carry separate error budgets.  Per-shell
diagnostics (gap margins, the second-order norm-loss and energy-shift matrix
elements, the slice contraction estimate) are accumulated into a trajectory
record.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import hamiltonian as ham
from .errors import ProjectorCollapseError, TrajectoryError
from .fock import Discretization, FockBasis, ModeSet, build_basis, build_modes
from .model import ModelParams, as_momentum, dispersion, free_nucleon_energy
from .spectral import (
    Contour,
    SolverOptions,
    contour_projector,
    contraction_norm,
    ground_state,
    neumann_projector,
    resolvent_solve,
)

EPS_ZERO = 1e-6  # projected-vector collapse threshold, relative to input norm


@dataclass
class ScaleRecord:
    """Diagnostics of one induction step (n = 0 is the free starting point)."""

    n: int
    cutoff: float            # running infrared edge of the coupled shells
    energy: float
    gap: float
    gap_bound: float         # zeta * omega at the next ladder point
    alpha: float             # second-order norm-loss matrix element
    delta_e: float           # second-order energy shift (includes g^2)
    norm_sq: float           # squared norm of the unnormalized projected state
    contraction: float       # slice contraction estimate at the contour
    embedded_gap: float      # gap of the previous operator on this scale's basis
    residual: float          # eigensolve residual
    velocity: tuple          # diagonal velocity expectation of the projected state
    backend: str


@dataclass
class Trajectory:
    params: ModelParams
    p: np.ndarray
    records: list[ScaleRecord]
    final_state: np.ndarray
    final_basis: FockBasis
    mode_set: ModeSet
    provenance: dict
    notes: list[str] = field(default_factory=list)
    ab_terms: list | None = None  # per-scale velocity correction pairs, opt-in

    @property
    def energies(self) -> np.ndarray:
        return np.array([r.energy for r in self.records])

    @property
    def final_energy(self) -> float:
        return self.records[-1].energy

    def self_energy(self) -> float:
        return free_nucleon_energy(self.p, self.params.m) - self.final_energy


def create_on(basis: FockBasis, vec: np.ndarray, mode_j: int) -> np.ndarray:
    """Image of a vector under the creation operator of one mode.

    Components that would exceed the boson cap are dropped, matching the
    truncation of the assembled operators.
    """
    table = basis.creation_table()[:, mode_j]
    occ = basis.occupation_matrix()[:, mode_j].astype(float)
    out = np.zeros_like(vec)
    src = np.nonzero(table >= 0)[0]
    np.add.at(out, table[src], vec[src] * np.sqrt(occ[src] + 1.0))
    return out


def annihilate_on(basis: FockBasis, vec: np.ndarray, mode_j: int) -> np.ndarray:
    """Adjoint of :func:`create_on` on the same truncated basis."""
    table = basis.creation_table()[:, mode_j]
    occ = basis.occupation_matrix()[:, mode_j].astype(float)
    out = np.zeros_like(vec)
    src = np.nonzero(table >= 0)[0]
    out[src] = vec[table[src]] * np.sqrt(occ[src] + 1.0)
    return out


def _shell_second_order(state_hat, op_prev, e_prev, shell_n, mode_set, basis,
                        tol_lin, ground_vec=None):
    """Per-shell sums of w * form^2 * (|R u|^2, <u, R u>) over shell modes.

    u is the (normalized) state with one extra boson in a shell mode and
    R the resolvent of the previous-scale operator at its ground energy;
    u lives in the gapped sector, so the real-shift solves are regular.
    Different shell modes never mix (the previous-scale operator conserves
    each new mode's occupation), so the per-mode sum is exact.
    """
    alpha = 0.0
    shift = 0.0
    for j in mode_set.modes_in_shell(shell_n):
        u = create_on(basis, state_hat, j)
        if not np.any(u):
            continue
        x = resolvent_solve(op_prev, e_prev, u, tol=tol_lin, project_out=ground_vec)
        w_f2 = mode_set.weights[j] * mode_set.form[j] ** 2
        alpha += w_f2 * float(x @ x)
        shift += w_f2 * float(u @ x)
    return alpha, shift


def compute_alpha(state_hat, op_prev, e_prev, shell_n, *, tol_lin=1e-12,
                  ground_vec=None) -> float:
    """Second-order norm-loss matrix element of one shell (no coupling factor)."""
    basis = op_prev.basis
    alpha, _ = _shell_second_order(
        state_hat, op_prev, e_prev, shell_n, basis.mode_set, basis, tol_lin, ground_vec
    )
    return alpha


def compute_delta_e(state_hat, op_prev, e_prev, shell_n, g, *, tol_lin=1e-12,
                    ground_vec=None) -> float:
    """Second-order ground-energy shift of one shell, including g^2."""
    basis = op_prev.basis
    _, shift = _shell_second_order(
        state_hat, op_prev, e_prev, shell_n, basis.mode_set, basis, tol_lin, ground_vec
    )
    return g * g * shift


def _velocity_of(vec, basis, p, m) -> tuple:
    rel = as_momentum(p)[None, :] - basis.field_momenta()
    denom = np.sqrt(np.einsum("ij,ij->i", rel, rel) + m * m)
    w = vec * vec
    return tuple(float(np.sum(w * rel[:, i] / denom)) for i in range(3))


def run_trajectory(p, params: ModelParams, disc: Discretization,
                   solver: SolverOptions | None = None, *,
                   backend: str = "contour", strict_gap: str = "warn",
                   collect_ab: bool = False,
                   mode_set: ModeSet | None = None) -> Trajectory:
    """Run the full induction n = 0..n_steps at total momentum ``p``.

    ``backend`` selects how the projector is applied: "contour" integrates
    the full new-scale resolvent, "neumann" expands it in the slice coupling.
    ``strict_gap`` decides whether a violated gap bound warns or aborts.
    Returns the trajectory with one record per scale.
    """
    if backend not in ("contour", "neumann"):
        raise ValueError(f"unknown backend {backend!r}")
    if strict_gap not in ("warn", "error"):
        raise ValueError(f"strict_gap must be 'warn' or 'error', got {strict_gap!r}")
    solver = solver or SolverOptions()
    pv = as_momentum(p)
    if mode_set is None:
        mode_set = build_modes(params, disc.radial_order, disc.angular_order)
    notes: list[str] = []
    basis_dims: list[int] = []

    e0 = free_nucleon_energy(pv, params.m)
    records = [ScaleRecord(
        n=0, cutoff=params.lambda_, energy=e0, gap=math.inf,
        gap_bound=params.zeta * float(dispersion(params.shell_radius(1), params.mu)),
        alpha=math.nan, delta_e=math.nan, norm_sq=1.0, contraction=math.nan,
        embedded_gap=math.inf, residual=0.0,
        velocity=tuple(pv / e0), backend=backend,
    )]
    ab_terms: list[tuple] = []

    basis_prev = build_basis(mode_set, 0, disc.b_max, disc.basis_cap)
    basis_dims.append(basis_prev.dim)
    state_prev = np.ones(1)       # unnormalized recursion vector, starts at vacuum
    e_prev = e0
    gap_prev = math.inf

    for n in range(1, params.n_steps + 1):
        try:
            basis_n = build_basis(mode_set, n, disc.b_max, disc.basis_cap)
            basis_dims.append(basis_n.dim)
            embed = basis_n.embedding_from(basis_prev)
            psi_prev = np.zeros(basis_n.dim)
            psi_prev[embed] = state_prev
            prev_norm = float(np.linalg.norm(psi_prev))
            psi_prev_hat = psi_prev / prev_norm

            op_n = ham.assemble(pv, n, params, basis_n)
            op_prev = ham.assemble(pv, n - 1, params, basis_n)
            slice_n = ham.slice_piece(n, params, basis_n)

            bound_prev = params.zeta * float(
                dispersion(params.shell_radius(n), params.mu))
            # the ladder point n+1 is a plain number even past the infrared end
            radius = 0.5 * params.zeta * float(
                dispersion(params.lambda_ * params.gamma ** (n + 1), params.mu))
            if gap_prev < bound_prev:
                radius = 0.25 * gap_prev
                notes.append(
                    f"scale {n}: contour radius fell back to gap/4 = {radius:.6g} "
                    f"(previous gap {gap_prev:.6g} below bound {bound_prev:.6g})"
                )
            contour = Contour(center=e_prev, radius=radius,
                              quad_points=solver.contour_points_init)

            if backend == "contour":
                psi_n = contour_projector(
                    op_n, contour, psi_prev,
                    tol=solver.tol_proj, tol_lin=solver.tol_lin,
                    points_cap=solver.contour_points_max,
                )
            else:
                psi_n, _series = neumann_projector(
                    op_prev, slice_n, contour, psi_prev,
                    tol_series=solver.tol_series, tol_lin=solver.tol_lin,
                    points_cap=solver.contour_points_max,
                )
            new_norm = float(np.linalg.norm(psi_n))
            if new_norm < EPS_ZERO * prev_norm:
                raise ProjectorCollapseError(
                    f"projected vector shrank to {new_norm:.3e} (input {prev_norm:.3e}); "
                    "the induction broke down (coupling too large for this ladder)"
                )

            gr = ground_state(op_n, tol=solver.tol_eig, seed=solver.seed,
                              max_iter=solver.max_iter)
            gr_emb = ground_state(op_prev, tol=solver.tol_eig, seed=solver.seed,
                                  max_iter=solver.max_iter)

            ground_prev_vec = gr_emb.vector
            alpha, shift = _shell_second_order(
                psi_prev_hat, op_prev, e_prev, n, mode_set, basis_n,
                solver.tol_lin, ground_vec=ground_prev_vec,
            )
            delta_e = params.g ** 2 * shift

            if collect_ab:
                from .observables import velocity_correction_terms
                ab_terms.append(velocity_correction_terms(
                    psi_prev_hat, op_prev, e_prev, n, params,
                    tol_lin=solver.tol_lin, ground_vec=ground_prev_vec,
                ))

            if params.g == 0.0 or solver.contraction_probes == 0:
                contraction = 0.0
            else:
                probes = [e_prev + radius * 1j, e_prev + radius,
                          e_prev - radius][: max(1, solver.contraction_probes)]
                contraction = max(
                    contraction_norm(op_prev, slice_n, z,
                                     iters=solver.contraction_iters,
                                     seed=solver.seed, tol_lin=1e-8)
                    for z in probes
                )

            bound_n = params.zeta * float(
                dispersion(params.lambda_ * params.gamma ** (n + 1), params.mu))
            if gr.gap < bound_n - 1e-8:
                msg = (f"scale {n}: gap {gr.gap:.6g} below bound {bound_n:.6g}")
                if strict_gap == "error":
                    raise RuntimeError(msg)
                notes.append(msg)

            records.append(ScaleRecord(
                n=n, cutoff=params.shell_radius(n), energy=gr.energy, gap=gr.gap,
                gap_bound=bound_n, alpha=alpha, delta_e=delta_e,
                norm_sq=new_norm ** 2, contraction=contraction,
                embedded_gap=gr_emb.gap, residual=gr.residual,
                velocity=_velocity_of(psi_n / new_norm, basis_n, pv, params.m),
                backend=backend,
            ))

            state_prev = psi_n
            basis_prev = basis_n
            e_prev = gr.energy
            gap_prev = gr.gap
        except Exception as err:
            if isinstance(err, TrajectoryError):
                raise
            raise TrajectoryError(n, err) from err

    provenance = {
        "solver": {
            "tol_eig": solver.tol_eig, "tol_lin": solver.tol_lin,
            "tol_proj": solver.tol_proj, "tol_series": solver.tol_series,
            "max_iter": solver.max_iter,
            "contour_points_init": solver.contour_points_init,
            "contour_points_max": solver.contour_points_max,
            "seed": solver.seed,
            "contraction_iters": solver.contraction_iters,
            "contraction_probes": solver.contraction_probes,
        },
        "discretization": {
            "radial_order": disc.radial_order, "angular_order": disc.angular_order,
            "b_max": disc.b_max, "basis_cap": disc.basis_cap,
            "dense_cap": disc.dense_cap,
        },
        "backend": backend,
        "strict_gap": strict_gap,
        "gamma": params.gamma,
        "basis_dims": basis_dims,
    }
    final_norm = float(np.linalg.norm(state_prev))
    return Trajectory(
        params=params, p=pv, records=records,
        final_state=state_prev / final_norm,
        final_basis=basis_prev, mode_set=mode_set,
        provenance=provenance, notes=notes,
        ab_terms=ab_terms if collect_ab else None,
    )


@dataclass
class GapLadderReport:
    """Per-scale verdicts for both gap claims along a trajectory."""

    scales: list[int]
    gaps: list[float]
    bounds: list[float]
    margins: list[float]
    embedded_gaps: list[float]
    embedded_bounds: list[float]
    embedded_margins: list[float]
    ok: bool


def check_gap_ladder(trajectory: Trajectory, tol: float = 1e-8) -> GapLadderReport:
    """Gap >= zeta*omega(next ladder point) per scale, plus the claim that the
    previous operator keeps its gap when viewed on the enlarged basis."""
    params = trajectory.params
    scales, gaps, bounds, margins = [], [], [], []
    egaps, ebounds, emargins = [], [], []
    ok = True
    for rec in trajectory.records:
        if rec.n == 0:
            continue
        scales.append(rec.n)
        gaps.append(rec.gap)
        bounds.append(rec.gap_bound)
        margins.append(rec.gap - rec.gap_bound)
        ebound = params.zeta * float(
            dispersion(params.shell_radius(rec.n), params.mu))
        egaps.append(rec.embedded_gap)
        ebounds.append(ebound)
        emargins.append(rec.embedded_gap - ebound)
        if rec.gap < rec.gap_bound - tol or rec.embedded_gap < ebound - tol:
            ok = False
    return GapLadderReport(scales, gaps, bounds, margins,
                           egaps, ebounds, emargins, ok)


@dataclass
class MomentumComparisonReport:
    """Scalewise energy excess of a moving fiber over the resting one."""

    scales: list[int]
    differences: list[float]
    min_difference: float
    ok: bool


def check_zero_momentum_minimum(traj_p: Trajectory, traj_0: Trajectory,
                                tol: float = 1e-6) -> MomentumComparisonReport:
    """E(p, n) - E(0, n) >= -tol at every scale; both runs must share the
    parameter point and discretization."""
    if traj_p.provenance["discretization"] != traj_0.provenance["discretization"]:
        raise ValueError("trajectories use different discretizations")
    if traj_p.params != traj_0.params:
        raise ValueError("trajectories use different model parameters")
    scales, diffs = [], []
    for rp, r0 in zip(traj_p.records, traj_0.records):
        scales.append(rp.n)
        diffs.append(rp.energy - r0.energy)
    min_diff = min(diffs)
    return MomentumComparisonReport(scales, diffs, min_diff, min_diff >= -tol)
