"""Ground states, spectral gaps, shifted resolvent solves, and the two
spectral-projector backends.

Everything iterative here is built on one kernel: a Lanczos
tridiagonalization with full reorthogonalization and a deterministic seeded
start vector.  Ground pairs are converged Ritz pairs of that kernel (with a
deflated second pass to expose ground-state multiplicity); small operators
are diagonalized directly and the test suite cross-checks the iterative
path against dense eigensolves.

Resolvent actions (H - z)^{-1} b reuse the same kernel built from b: for
any shift z the small shifted tridiagonal system yields the Krylov-subspace
solution, with the residual monitored per shift.  One Krylov basis
therefore serves every quadrature node of a contour, which is what makes
the circle projector cheap.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np
import scipy.linalg as sla

from .errors import (
    DegenerateGroundStateError,
    ResolventBreakdownError,
    SeriesDivergenceError,
    SolverConvergenceError,
)

_DENSE_DIM = 64  # below this, dense diagonalization beats the iterative path


@dataclass(frozen=True)
class SolverOptions:
    """Tolerances, caps, and the seed for every iterative kernel."""

    tol_eig: float = 1e-10
    tol_lin: float = 1e-12
    tol_proj: float = 1e-10
    tol_series: float = 1e-9
    max_iter: int = 5000
    contour_points_init: int = 16
    contour_points_max: int = 256
    seed: int = 1234
    contraction_iters: int = 24
    contraction_probes: int = 2


@dataclass
class GroundResult:
    energy: float
    vector: np.ndarray
    gap: float
    residual: float
    iterations: int
    method: str


@dataclass(frozen=True)
class Contour:
    """Circle around a reference energy for the spectral projector."""

    center: float
    radius: float
    quad_points: int = 16

    def __post_init__(self):
        if self.radius <= 0:
            raise ValueError(f"contour radius must be positive, got {self.radius}")
        if self.quad_points < 8 or self.quad_points % 2:
            raise ValueError("quad_points must be even and >= 8")

    def nodes(self, q: int | None = None) -> np.ndarray:
        """Midpoint-rule nodes on the circle; never touch the real axis."""
        q = self.quad_points if q is None else q
        theta = 2.0 * np.pi * (np.arange(q) + 0.5) / q
        return self.center + self.radius * np.exp(1j * theta)


class ConditioningWarning(UserWarning):
    """An eigenvalue sits close to the projector contour."""


def _start_vector(dim: int, seed: int) -> np.ndarray:
    v = np.random.default_rng(seed).standard_normal(dim)
    return v / np.linalg.norm(v)


def ground_state(op, tol: float = 1e-10, seed: int = 1234,
                 max_iter: int = 5000) -> GroundResult:
    """Lowest eigenpair and spectral gap of a symmetric operator.

    Deterministic for fixed seed.  Raises
    :class:`DegenerateGroundStateError` when the two lowest eigenvalues agree
    to 1e-10 of the operator norm, and :class:`SolverConvergenceError` when
    the residual check fails after retries.
    """
    dim = op.dim
    if dim == 1:
        e = float(op.diag[0])
        return GroundResult(e, np.ones(1), math.inf, 0.0, 0, "dense")
    scale = max(op.norm_upper_bound(), 1.0)
    if dim <= _DENSE_DIM:
        dense = op.to_dense(limit=_DENSE_DIM)
        evals, evecs = np.linalg.eigh(dense)
        e, vec, gap_val = float(evals[0]), evecs[:, 0], float(evals[1] - evals[0])
        iters = 0
        method = "dense"
    else:
        e, vec, gap_val, iters = _lanczos_lowest_pair(op, seed, scale, max_iter)
        method = "lanczos"
    vec = vec / np.linalg.norm(vec)
    if vec[np.argmax(np.abs(vec))] < 0:
        vec = -vec  # fix the sign convention: largest component positive
    # Rayleigh refinement: quadratic in the residual, costs one apply
    hv = op.apply(vec)
    e = float(vec @ hv)
    residual = float(np.linalg.norm(hv - e * vec))
    if residual > tol * scale:
        raise SolverConvergenceError(
            f"ground-state residual {residual:.3e} above {tol:.1e} * |H| ~ {tol * scale:.3e}"
        )
    if gap_val < 1e-10 * scale:
        raise DegenerateGroundStateError(
            f"gap {gap_val:.3e} below degeneracy threshold {1e-10 * scale:.3e}"
        )
    return GroundResult(e, vec, gap_val, residual, iters, method)


def _lanczos_lowest_pair(op, seed: int, scale: float, max_iter: int):
    """Two smallest Ritz values and the ground Ritz vector.

    Full-reorthogonalization Lanczos from a seeded start, extended until the
    residual bounds of the two lowest Ritz pairs drop below their targets.
    A single start vector sees one copy of any degenerate level, so exact
    multiplets (parity pairs at rest momentum) cost nothing extra.
    """
    fact = LanczosFactorization(op, _start_vector(op.dim, seed))
    cap = min(op.dim, max_iter)
    tol_ground = 1e-13 * scale
    tol_second = 3e-11 * scale
    while True:
        fact.extend(24)
        k = fact.size
        theta, vecs = sla.eigh_tridiagonal(fact.alphas, fact.betas[: k - 1],
                                           lapack_driver="stev")
        if fact.closed:
            break
        if k >= 2:
            tail = fact.betas[k - 1]
            ground_ok = abs(tail * vecs[-1, 0]) <= tol_ground
            second_ok = abs(tail * vecs[-1, 1]) <= tol_second
            if ground_ok and second_ok:
                break
        if k >= cap:
            raise SolverConvergenceError(
                f"Lanczos lowest-pair iteration stalled after {k} steps "
                f"(residual bound {abs(fact.betas[k - 1] * vecs[-1, 0]):.3e})"
            )
    if fact.size < 2:
        raise SolverConvergenceError("Krylov space closed before a second "
                                     "Ritz value was available")
    vec = fact.assemble(vecs[:, 0].astype(float))
    e, second = float(theta[0]), float(theta[1])

    # verification pass on the deflated operator with a fresh seed: a single
    # Krylov vector sees one copy of each level, so a degenerate ground state
    # (or an excited state the first start vector barely touched) only shows
    # up once the found ground direction is projected out
    psi = vec / np.linalg.norm(vec)
    fact2 = LanczosFactorization(op, _start_vector(op.dim, seed + 101),
                                 project_out=psi)
    loose = 1e-6 * scale
    while fact2.b_norm > 0:
        fact2.extend(24)
        k2 = fact2.size
        theta2, vecs2 = sla.eigh_tridiagonal(fact2.alphas, fact2.betas[: k2 - 1],
                                             lapack_driver="stev")
        if fact2.closed:
            break
        bound = abs(fact2.betas[k2 - 1] * vecs2[-1, 0])
        target = loose if theta2[0] > second - 1e-8 * scale else tol_second
        if bound <= target:
            break
        if k2 >= cap:
            raise SolverConvergenceError(
                f"deflated verification pass stalled after {k2} steps"
            )
    if fact2.size and float(theta2[0]) < second - 1e-8 * scale:
        second = float(theta2[0])
    return e, vec, second - e, fact.size + fact2.size


def gap(op, tol: float = 1e-10, seed: int = 1234) -> float:
    """Difference of the two lowest eigenvalues."""
    return ground_state(op, tol=tol, seed=seed).gap


class LanczosFactorization:
    """Incremental Lanczos tridiagonalization of a symmetric operator.

    Built from a fixed start vector with full reorthogonalization; solves
    (H - z) x = b for any number of shifts z from the same basis.  The
    iteration stops extending once the Krylov space closes (an invariant
    subspace was found), after which every shifted solve is exact.
    """

    def __init__(self, op, b, project_out: np.ndarray | None = None):
        self.op = op
        self.project_out = project_out
        b = np.asarray(b, dtype=float).copy()
        if project_out is not None:
            b -= project_out * (project_out @ b)
        self.b_norm = float(np.linalg.norm(b))
        self.vectors: list[np.ndarray] = []
        self.alphas: list[float] = []
        self.betas: list[float] = []
        self.closed = self.b_norm == 0.0
        if not self.closed:
            self.vectors.append(b / self.b_norm)

    @property
    def size(self) -> int:
        return len(self.alphas)

    def _orthogonalize(self, w: np.ndarray) -> np.ndarray:
        # two passes ("twice is enough"): one pass leaves ghosts when the
        # recurrence cancels strongly, e.g. for near-eigenvector starts
        for _ in range(2):
            if self.project_out is not None:
                w = w - self.project_out * (self.project_out @ w)
            for v in self.vectors:
                w = w - v * (v @ w)
        return w

    def extend(self, steps: int) -> None:
        dim = self.op.dim
        for _ in range(steps):
            if self.closed or self.size >= dim:
                self.closed = True
                return
            v = self.vectors[-1]
            w = self.op.apply(v)
            self.alphas.append(float(v @ w))
            w = self._orthogonalize(w)
            beta = float(np.linalg.norm(w))
            if beta <= 1e-14 * max(abs(self.alphas[-1]), 1.0):
                self.closed = True
                self.betas.append(0.0)
                return
            self.betas.append(beta)
            self.vectors.append(w / beta)

    def solve_shift(self, z: complex) -> tuple[np.ndarray, float]:
        """Krylov coordinates y of (H - z)^{-1} b and a residual estimate."""
        k = self.size
        if k == 0:
            # the zero solution; its residual is the full right-hand side
            return np.zeros(0, dtype=complex), self.b_norm
        diag = np.asarray(self.alphas, dtype=complex) - z
        off = np.asarray(self.betas[: k - 1], dtype=complex)
        ab = np.zeros((3, k), dtype=complex)
        ab[0, 1:] = off
        ab[1, :] = diag
        ab[2, :-1] = off
        rhs = np.zeros(k, dtype=complex)
        rhs[0] = self.b_norm
        try:
            y = sla.solve_banded((1, 1), ab, rhs)
        except np.linalg.LinAlgError as err:
            raise ResolventBreakdownError(f"shift {z} is singular in the Krylov space") from err
        if not np.all(np.isfinite(y)):
            raise ResolventBreakdownError(f"shift {z} produced a non-finite solve")
        tail = self.betas[k - 1] if not self.closed else 0.0
        return y, float(abs(tail * y[-1]))

    def assemble(self, y: np.ndarray) -> np.ndarray:
        x = np.zeros(self.op.dim, dtype=y.dtype)
        for coeff, v in zip(y, self.vectors):
            x += coeff * v
        return x

    def ritz_values(self) -> np.ndarray:
        if self.size == 0:
            return np.zeros(0)
        return sla.eigvalsh_tridiagonal(self.alphas, self.betas[: self.size - 1],
                                        lapack_driver="stev")

    def converged_ritz_values(self, tol: float) -> np.ndarray:
        """Ritz values whose residual bound is below ``tol``; only these
        approximate true eigenvalues."""
        k = self.size
        if k == 0:
            return np.zeros(0)
        theta, vecs = sla.eigh_tridiagonal(self.alphas, self.betas[: k - 1],
                                           lapack_driver="stev")
        tail = 0.0 if self.closed else self.betas[k - 1]
        bounds = abs(tail) * np.abs(vecs[-1, :])
        return theta[bounds <= tol]


def resolvent_solve(op, z: complex, b, tol: float = 1e-12,
                    max_iter: int | None = None,
                    project_out: np.ndarray | None = None) -> np.ndarray:
    """Solve (H - z) x = b for a symmetric H and a (possibly complex) shift.

    Returns a real vector for real shifts.  ``project_out`` deflates a known
    eigendirection (e.g. the ground state) from the Krylov space, which keeps
    real shifts inside the spectral gap well conditioned.
    """
    b = np.asarray(b, dtype=float)
    b_norm = np.linalg.norm(b)
    if b_norm == 0.0:
        return np.zeros_like(b, dtype=float if complex(z).imag == 0.0 else complex)
    fact = LanczosFactorization(op, b, project_out=project_out)
    cap = op.dim if max_iter is None else min(max_iter, op.dim)
    while True:
        fact.extend(12)
        y, res = fact.solve_shift(complex(z))
        if res <= tol * fact.b_norm or fact.closed:
            break
        if fact.size >= cap:
            raise SolverConvergenceError(
                f"resolvent solve stalled at residual {res:.3e} after {fact.size} steps"
            )
    x = fact.assemble(y)
    if complex(z).imag == 0.0:
        x = x.real
    return x


def _quadrature_sum(contour: Contour, q: int, node_solutions) -> np.ndarray:
    """Trapezoid on the circle: -(1/2 pi i) closed-integral of the resolvent."""
    theta = 2.0 * np.pi * (np.arange(q) + 0.5) / q
    phases = np.exp(1j * theta)
    acc = None
    for phase, x in zip(phases, node_solutions):
        term = phase * x
        acc = term if acc is None else acc + term
    return -(contour.radius / q) * acc


def contour_projector(op, contour: Contour, v, tol: float = 1e-10,
                      tol_lin: float = 1e-12, points_cap: int = 256,
                      warn_conditioning: bool = True) -> np.ndarray:
    """Spectral projection of ``v`` onto the eigenspace inside the contour.

    Trapezoidal quadrature of the resolvent around the circle, doubling the
    node count until the projected vector moves by less than ``tol`` times
    the input norm.  Returns the (generally unnormalized) projected vector.
    """
    v = np.asarray(v, dtype=float)
    v_norm = np.linalg.norm(v)
    if v_norm == 0.0:
        return np.zeros_like(v)
    fact = LanczosFactorization(op, v)
    q = contour.quad_points
    prev = None
    while True:
        nodes = contour.nodes(q)
        solutions = []
        for z in nodes:
            while True:
                y, res = fact.solve_shift(z)
                if res <= tol_lin * fact.b_norm or fact.closed:
                    break
                fact.extend(16)
            solutions.append(fact.assemble(y))
        result = _quadrature_sum(contour, q, solutions)
        out = result.real
        if prev is not None and np.linalg.norm(out - prev) <= tol * v_norm:
            break
        if q * 2 > points_cap:
            if prev is None or np.linalg.norm(out - prev) > 100 * tol * v_norm:
                raise SolverConvergenceError(
                    f"contour quadrature did not settle within {points_cap} nodes"
                )
            break
        prev = out
        q *= 2
    if warn_conditioning:
        ritz = fact.converged_ritz_values(0.01 * contour.radius)
        if ritz.size:
            ring_dist = np.abs(np.abs(ritz - contour.center) - contour.radius)
            if np.any(ring_dist < 0.1 * contour.radius):
                warnings.warn(
                    "an eigenvalue lies within 10% of the contour radius from "
                    "the circle; projector conditioning is degraded",
                    ConditioningWarning,
                    stacklevel=2,
                )
    return out


@dataclass
class SeriesReport:
    """Per-order diagnostics of the resolvent power-series backend."""

    term_norms: list[float]      # max over quadrature nodes, per order, /|v|
    truncation_order: int
    quad_points: int
    ratio_estimate: float        # fitted geometric ratio of the tail
    proven_region: bool          # nodes inside the proven annulus by construction


def neumann_projector(op_prev, slice_op, contour: Contour, v,
                      tol_series: float = 1e-9, tol_lin: float = 1e-12,
                      points_cap: int = 256,
                      max_order: int = 60) -> tuple[np.ndarray, SeriesReport]:
    """Projector with the new-scale resolvent expanded in the slice coupling.

    Per quadrature node z the action of (H_prev + slice - z)^{-1} is summed
    as t_0 = R v, t_j = R (-slice t_{j-1}) with R = (H_prev - z)^{-1}, so the
    result agrees with :func:`contour_projector` applied to the full
    operator whenever the series converges.  Term norms must decrease;
    three consecutive non-decreasing orders abort with
    :class:`SeriesDivergenceError`.
    """
    v = np.asarray(v, dtype=float)
    v_norm = np.linalg.norm(v)
    if v_norm == 0.0:
        return np.zeros_like(v), SeriesReport([], 0, contour.quad_points, 0.0, True)
    q = contour.quad_points
    order_norms: list[float] = []
    max_used = 0
    node_sums = []
    for z in contour.nodes(q):
        t = _resolvent_via_fact(op_prev, z, v, tol_lin)
        total = t.copy()
        norms = [np.linalg.norm(t) / v_norm]
        # consecutive-pair maxima: robust against the even/odd oscillation of
        # term norms that a two-step coupling structure produces
        pair_max: list[float] = []
        j = 0
        while norms[-1] > tol_series:
            j += 1
            if j > max_order:
                raise SeriesDivergenceError(
                    f"series did not reach {tol_series:.1e} within {max_order} orders"
                )
            t = _resolvent_via_fact(op_prev, z, -slice_op.apply(t), tol_lin)
            total += t
            norms.append(np.linalg.norm(t) / v_norm)
            pair_max.append(max(norms[-1], norms[-2]))
            if len(pair_max) >= 4 and (
                pair_max[-1] >= pair_max[-2] >= pair_max[-3] >= pair_max[-4]
            ):
                raise SeriesDivergenceError(
                    "term norms non-decreasing over 3 consecutive orders; "
                    "the slice coupling is too large for this shell"
                )
        # highest order that contributed above tolerance (the final term is
        # the one that dropped below it)
        contributing = [i for i, nn in enumerate(norms) if nn > tol_series]
        max_used = max(max_used, contributing[-1] if contributing else 0)
        node_sums.append(total)
        for i, nn in enumerate(norms):
            if i < len(order_norms):
                order_norms[i] = max(order_norms[i], nn)
            else:
                order_norms.append(nn)
    out = _quadrature_sum(contour, q, node_sums).real
    ratio = 0.0
    if len(order_norms) >= 3:
        tail = np.log(np.asarray(order_norms[1:]))
        k = np.arange(1, len(order_norms))
        ratio = float(np.exp(np.polyfit(k, tail, 1)[0]))
    elif len(order_norms) == 2 and order_norms[0] > 0:
        ratio = order_norms[1] / order_norms[0]
    report = SeriesReport(order_norms, max_used, q, ratio, True)
    return out, report


def _resolvent_via_fact(op, z: complex, b, tol_lin: float) -> np.ndarray:
    """One shifted solve on a possibly complex right-hand side."""
    b = np.asarray(b)
    if np.iscomplexobj(b):
        xr = _resolvent_via_fact(op, z, b.real, tol_lin)
        xi = _resolvent_via_fact(op, z, b.imag, tol_lin)
        return xr + 1j * xi
    nb = np.linalg.norm(b)
    if nb == 0.0:
        return np.zeros(op.dim, dtype=complex)
    fact = LanczosFactorization(op, b)
    while True:
        fact.extend(16)
        y, res = fact.solve_shift(complex(z))
        if res <= tol_lin * fact.b_norm or fact.closed:
            return fact.assemble(y)
        if fact.size >= op.dim:
            raise SolverConvergenceError("shifted solve exhausted the space")


def contraction_norm(op_prev, slice_op, z: complex, iters: int = 24,
                     seed: int = 1234, tol_lin: float = 1e-10) -> float:
    """Spectral-radius estimate of (H_prev - z)^{-1} * slice.

    Coincides with the symmetrized resolvent-sandwiched slice norm that
    governs the power-series convergence, but never forms operator square
    roots.  Power iteration with the growth rate read off the last half of
    the log-norm history, which stays stable when leading eigenvalues come
    in +/- or conjugate pairs.  Linear in the coupling by construction.
    """
    rng = np.random.default_rng(seed)
    t = rng.standard_normal(op_prev.dim).astype(complex)
    t /= np.linalg.norm(t)
    log_ratios = []
    for _ in range(iters):
        st = slice_op.apply(t)
        ns = np.linalg.norm(st)
        if ns == 0.0:
            return 0.0
        t = _resolvent_via_fact(op_prev, z, st, tol_lin)
        nt = np.linalg.norm(t)
        if not np.isfinite(nt) or nt > 1e300:
            raise SolverConvergenceError("contraction power iteration overflowed")
        log_ratios.append(math.log(nt))
        t /= nt
    half = log_ratios[len(log_ratios) // 2:]
    return float(np.exp(np.mean(half)))
