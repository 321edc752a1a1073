"""Discretized field modes and the truncated occupation-number basis.

The continuum field is replaced by a finite set of momentum modes: per shell,
Gauss-Legendre radial nodes composed with an antipodally symmetric angular
point set.  Quadrature weights carry the r^2 Jacobian, so a continuum
integral of F(k) over the shell region becomes sum_j w_j F(k_j).  Coupling
amplitudes then discretize as sqrt(w_j) * form_factor(k_j) per mode, which
keeps the canonical commutation relations of the dimensionless mode
operators intact.

Occupation states are stored as sorted tuples of occupied mode indices
(with multiplicity); the basis is graded by boson number and lexicographic
within each grade, so enumeration is deterministic and the vacuum sits at
position 0.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from itertools import combinations_with_replacement

import numpy as np

from .errors import BasisSizeError
from .model import ModelParams, dispersion, form_factor, shells

OccState = tuple  # sorted tuple of occupied mode indices, multiplicity = count


@dataclass(frozen=True)
class Discretization:
    """Quadrature and truncation knobs for the mode set and basis."""

    radial_order: int = 2
    angular_order: int = 6
    b_max: int = 2
    basis_cap: int = 200_000
    dense_cap: int = 4000


@dataclass(frozen=True)
class Mode:
    k: np.ndarray
    weight: float
    shell_index: int


class ModeSet:
    """Immutable set of discretized field modes, ordered by shell.

    Modes of shell n occupy a contiguous index block, shells in increasing n
    (decreasing energy), so the modes active at scale n form a prefix.
    """

    def __init__(self, k, weights, shell_index, mu, radial_order=0, angular_order=0):
        self.k = np.asarray(k, dtype=float).reshape(-1, 3)
        self.weights = np.asarray(weights, dtype=float).reshape(-1)
        self.shell_index = np.asarray(shell_index, dtype=int).reshape(-1)
        if not (len(self.k) == len(self.weights) == len(self.shell_index)):
            raise ValueError("mode arrays must have equal length")
        if np.any(np.diff(self.shell_index) < 0):
            raise ValueError("modes must be ordered by increasing shell index")
        self.mu = float(mu)
        self.radial_order = radial_order
        self.angular_order = angular_order
        self.radii = np.linalg.norm(self.k, axis=1)
        self.omega = dispersion(self.radii, self.mu)
        self.form = form_factor(self.radii, self.mu)
        # sqrt(w) * form_factor: the discrete per-mode coupling amplitude
        self.coupling = np.sqrt(self.weights) * self.form
        self.antipode = self._match_antipodes()

    def __len__(self) -> int:
        return len(self.weights)

    @property
    def modes(self) -> list[Mode]:
        return [
            Mode(k=self.k[j].copy(), weight=float(self.weights[j]),
                 shell_index=int(self.shell_index[j]))
            for j in range(len(self))
        ]

    def _match_antipodes(self) -> np.ndarray:
        lookup = {}
        for j in range(len(self)):
            lookup[tuple(np.round(self.k[j], 12))] = j
        out = np.full(len(self), -1, dtype=int)
        for j in range(len(self)):
            out[j] = lookup.get(tuple(np.round(-self.k[j], 12)), -1)
        return out

    def modes_in_shell(self, n: int) -> np.ndarray:
        return np.nonzero(self.shell_index == n)[0]

    def active_count(self, scale: int) -> int:
        """Number of modes in shells 1..scale (a prefix by construction)."""
        return int(np.searchsorted(self.shell_index, scale, side="right"))

    def to_json_dict(self) -> dict:
        return {
            "radial_order": self.radial_order,
            "angular_order": self.angular_order,
            "mu": self.mu,
            "modes": [
                {
                    "k": [float(x) for x in self.k[j]],
                    "weight": float(self.weights[j]),
                    "shell": int(self.shell_index[j]),
                }
                for j in range(len(self))
            ],
        }


def _angular_set(order: int) -> tuple[np.ndarray, np.ndarray]:
    """Antipodally symmetric unit directions with weights summing to 4 pi.

    Directions are stored as explicit +/- pairs (second half is the exact
    negation of the first), so parity checks cancel bitwise.
    """
    if order == 2:
        half = np.array([[0.0, 0.0, 1.0]])
    elif order == 6:
        half = np.array([[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]])
    elif order == 8:
        s = 1.0 / math.sqrt(3.0)
        half = np.array([[s, s, s], [s, s, -s], [s, -s, s], [s, -s, -s]])
    elif order == 12:
        phi = (1.0 + math.sqrt(5.0)) / 2.0
        r = math.sqrt(1.0 + phi * phi)
        a, b = 1.0 / r, phi / r
        half = np.array(
            [[0.0, a, b], [0.0, a, -b], [a, b, 0.0], [a, -b, 0.0], [b, 0.0, a], [-b, 0.0, a]]
        )
    else:
        raise ValueError(
            f"angular_order {order} has no antipodally symmetric point set here; "
            "supported orders: 2, 6, 8, 12"
        )
    dirs = np.vstack([half, -half])
    wts = np.full(len(dirs), 4.0 * math.pi / len(dirs))
    return dirs, wts


def build_modes(params: ModelParams, radial_order: int, angular_order: int) -> ModeSet:
    """Quadrature realization of the interaction region (kappa, lambda_].

    Per shell: ``radial_order`` Gauss-Legendre nodes on [lower, upper] with
    the r^2 Jacobian folded into the weight, composed with the angular set.
    """
    if radial_order < 1:
        raise ValueError("radial_order must be >= 1")
    dirs, ang_w = _angular_set(angular_order)
    gl_x, gl_w = np.polynomial.legendre.leggauss(radial_order)
    ks, ws, shell_ids = [], [], []
    for shell in shells(params):
        half_width = 0.5 * (shell.upper - shell.lower)
        mid = 0.5 * (shell.upper + shell.lower)
        radii = mid + half_width * gl_x
        radial_w = half_width * gl_w * radii**2
        for r, wr in zip(radii, radial_w):
            ks.append(r * dirs)
            ws.append(wr * ang_w)
            shell_ids.append(np.full(len(dirs), shell.index))
    return ModeSet(
        k=np.vstack(ks),
        weights=np.concatenate(ws),
        shell_index=np.concatenate(shell_ids),
        mu=params.mu,
        radial_order=radial_order,
        angular_order=angular_order,
    )


def basis_size(n_modes: int, b_max: int) -> int:
    """Number of occupation states with at most b_max bosons in n_modes modes."""
    if n_modes == 0:
        return 1  # the vacuum
    return sum(math.comb(n_modes + b - 1, b) for b in range(b_max + 1))


class FockBasis:
    """All occupation states active at a given scale, up to ``b_max`` bosons.

    A state is active at scale n when every occupied mode lies in a shell of
    index <= n.  The basis at scale n-1 embeds into the basis at scale n by
    the identity on occupations (the "pad with vacuum" identification);
    :meth:`embedding_from` recovers the index map.
    """

    def __init__(self, mode_set: ModeSet, scale: int, b_max: int,
                 basis_cap: int = 200_000):
        n_shells = int(mode_set.shell_index.max(initial=0))
        if not 0 <= scale <= n_shells:
            raise ValueError(f"scale must lie in 0..{n_shells}, got {scale}")
        self.mode_set = mode_set
        self.scale = scale
        self.b_max = int(b_max)
        self.n_active = mode_set.active_count(scale)
        size = basis_size(self.n_active, self.b_max)
        if size > basis_cap:
            raise BasisSizeError(size, basis_cap)
        states: list[OccState] = []
        for b in range(self.b_max + 1):
            states.extend(combinations_with_replacement(range(self.n_active), b))
        self.states = states
        self.index = {s: i for i, s in enumerate(states)}
        self._occ = None
        self._creation = None

    @property
    def dim(self) -> int:
        return len(self.states)

    def occupation_matrix(self) -> np.ndarray:
        """(dim, n_active) int8 matrix of per-mode occupation numbers."""
        if self._occ is None:
            occ = np.zeros((self.dim, self.n_active), dtype=np.int8)
            for i, s in enumerate(self.states):
                for j in s:
                    occ[i, j] += 1
            self._occ = occ
        return self._occ

    def creation_table(self) -> np.ndarray:
        """(dim, n_active) indices of each state with one extra boson.

        Entry (i, j) is the basis position of state_i + 1_j, or -1 when that
        state exceeds the boson cap (truncation drops it).
        """
        if self._creation is None:
            table = np.full((self.dim, self.n_active), -1, dtype=np.int64)
            index = self.index
            for i, s in enumerate(self.states):
                if len(s) == self.b_max:
                    continue
                for j in range(self.n_active):
                    table[i, j] = index[tuple(sorted(s + (j,)))]
            self._creation = table
        return self._creation

    def boson_counts(self) -> np.ndarray:
        return np.fromiter((len(s) for s in self.states), dtype=int, count=self.dim)

    def field_momenta(self) -> np.ndarray:
        """(dim, 3) total field momentum per state."""
        occ = self.occupation_matrix().astype(float)
        return occ @ self.mode_set.k[: self.n_active]

    def field_energies(self) -> np.ndarray:
        """(dim,) free field energy per state."""
        occ = self.occupation_matrix().astype(float)
        return occ @ self.mode_set.omega[: self.n_active]

    def embedding_from(self, smaller: "FockBasis") -> np.ndarray:
        """Positions of a lower-scale basis inside this one, occupation-exact."""
        if smaller.mode_set is not self.mode_set:
            raise ValueError("bases must share one mode set")
        if smaller.scale > self.scale or smaller.b_max > self.b_max:
            raise ValueError("embedding requires scale and b_max to not decrease")
        return np.fromiter(
            (self.index[s] for s in smaller.states), dtype=np.int64, count=smaller.dim
        )

    def sector_sizes(self) -> list[int]:
        return np.bincount(self.boson_counts(), minlength=self.b_max + 1).tolist()

    def to_json_dict(self) -> dict:
        return {
            "scale": self.scale,
            "b_max": self.b_max,
            "active_modes": self.n_active,
            "dim": self.dim,
            "states_by_boson_number": self.sector_sizes(),
        }


def build_basis(mode_set: ModeSet, scale: int, b_max: int,
                basis_cap: int = 200_000) -> FockBasis:
    return FockBasis(mode_set, scale, b_max, basis_cap)


def occupations(state: OccState) -> dict[int, int]:
    """Occupation map mode index -> count for a single state."""
    out: dict[int, int] = {}
    for j in state:
        out[j] = out.get(j, 0) + 1
    return out


def field_momentum(state: OccState, mode_set: ModeSet) -> np.ndarray:
    """Total field momentum sum_j occ_j * k_j of one state."""
    p = np.zeros(3)
    for j in state:
        p += mode_set.k[j]
    return p


def field_energy(state: OccState, mode_set: ModeSet) -> float:
    """Free field energy sum_j occ_j * omega(k_j) of one state."""
    return float(sum(mode_set.omega[j] for j in state))
