"""Model parameters, dispersion relation, coupling kernel, and shell geometry.

A single relativistic nucleon of mass ``m`` couples with strength ``g`` to a
scalar meson field of mass ``mu``.  Interaction momenta are restricted to the
ball shell between an infrared cutoff ``kappa`` and an ultraviolet cutoff
``lambda_``, subdivided into ``n_steps`` geometric sub-shells with ratio
``gamma = (kappa/lambda_)**(1/n_steps)``.  Units are chosen so that
``hbar = c = 1``; momenta and masses carry energy units.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

FORM_NORM = (2.0 * math.pi) ** (-1.5)


def as_momentum(p) -> np.ndarray:
    """Coerce ``p`` to a float vector of shape (3,)."""
    v = np.asarray(p, dtype=float).reshape(-1)
    if v.size == 1:
        v = np.array([0.0, 0.0, float(v[0])])
    if v.shape != (3,):
        raise ValueError(f"momentum must have 3 components, got shape {v.shape}")
    return v


def _radius(k) -> np.ndarray | float:
    """Radial part of ``k``: vectors of shape (..., 3) are reduced along the
    last axis, anything else is treated as a radius already."""
    a = np.asarray(k, dtype=float)
    if a.ndim >= 1 and a.shape[-1] == 3:
        return np.linalg.norm(a, axis=-1)
    return a


def dispersion(k, mu: float):
    """Meson frequency sqrt(|k|^2 + mu^2).

    ``k`` may be a radius, an array of radii, or momentum vectors with a
    trailing axis of length 3.
    """
    r = _radius(k)
    return np.sqrt(r * r + mu * mu)


def form_factor(k, mu: float):
    """Momentum-space coupling kernel (2 pi)^{-3/2} (2 omega(k))^{-1/2}."""
    return FORM_NORM / np.sqrt(2.0 * dispersion(k, mu))


def free_nucleon_energy(p, m: float) -> float:
    """Ground energy of the uncoupled theory, sqrt(|p|^2 + m^2)."""
    v = as_momentum(p)
    return float(math.sqrt(float(v @ v) + m * m))


@dataclass(frozen=True)
class ModelParams:
    """Physical constants plus the shell-scheme constants.

    ``gamma`` is derived: the user supplies an integer ``n_steps`` and the
    ladder ratio is ``(kappa/lambda_)**(1/n_steps)``, so the shells close
    exactly on the infrared cutoff.
    """

    m: float = 1.0
    mu: float = 2.0
    g: float = 0.03
    lambda_: float = 8.0
    kappa: float = 1.0
    n_steps: int = 6
    p_max: float = 0.3
    theta: float = 0.2
    zeta: float = 0.45
    allow_small_mu: bool = False

    @property
    def gamma(self) -> float:
        return (self.kappa / self.lambda_) ** (1.0 / self.n_steps)

    def shell_radius(self, n: int) -> float:
        """Ladder point lambda_ * gamma^n; the last rung is snapped to kappa."""
        if n == self.n_steps:
            return self.kappa
        return self.lambda_ * self.gamma**n


@dataclass(frozen=True)
class Shell:
    """Momentum annulus (lower, upper] added at one induction step."""

    index: int
    lower: float
    upper: float


def validate(params: ModelParams) -> list[str]:
    """Check every parameter constraint; returns one message per violation.

    An empty list means the parameter point is admissible.  Violations are
    data, not exceptions: callers decide whether to proceed.
    """
    v: list[str] = []
    if not params.m > 0:
        v.append(f"m > 0 required (got m={params.m})")
    if not params.mu > 1 and not params.allow_small_mu:
        v.append(f"mu > 1 required (got mu={params.mu})")
    if params.allow_small_mu and not params.mu > 0:
        v.append(f"mu > 0 required (got mu={params.mu})")
    if not abs(params.g) <= 1:
        v.append(f"|g| <= 1 required (got g={params.g})")
    if not params.lambda_ > 1:
        v.append(f"lambda > 1 required (got lambda={params.lambda_})")
    if not 0 < params.kappa < params.lambda_:
        v.append(
            f"0 < kappa < lambda required (got kappa={params.kappa}, "
            f"lambda={params.lambda_})"
        )
    if not (isinstance(params.n_steps, int) and params.n_steps >= 1):
        v.append(f"n_steps must be an integer >= 1 (got {params.n_steps})")
        return v  # gamma is meaningless without a valid ladder
    gamma = params.gamma
    if not 0.5 < gamma < 1.0:
        v.append(
            f"gamma in (1/2, 1) required (got gamma={gamma:.6g} from "
            f"lambda={params.lambda_}, kappa={params.kappa}, n_steps={params.n_steps})"
        )
    closure = params.lambda_ * gamma**params.n_steps
    if not math.isclose(closure, params.kappa, rel_tol=1e-12):
        v.append(
            f"lambda * gamma^n_steps must equal kappa (got {closure!r} vs {params.kappa!r})"
        )
    if not 0 < params.p_max < 0.5:
        v.append(f"0 < p_max < 1/2 required (got p_max={params.p_max})")
    if not 0.125 < params.theta < 0.25:
        v.append(f"1/8 < theta < 1/4 required (got theta={params.theta})")
    if not params.zeta > 0.25:
        v.append(f"zeta > 1/4 required (got zeta={params.zeta})")
    if not 1.0 - params.theta - params.p_max >= params.zeta:
        v.append(
            f"1 - theta - p_max >= zeta required (got "
            f"{1.0 - params.theta - params.p_max:.6g} < {params.zeta})"
        )
    return v


def validation_notes(params: ModelParams) -> list[str]:
    """Non-fatal caveats for admissible-but-unproven parameter points."""
    notes: list[str] = []
    if params.allow_small_mu and params.mu <= 1:
        notes.append(
            "mu <= 1 admitted by override: spectral-gap guarantees are unproven "
            "in this regime; gap checks are reported but not certified"
        )
    return notes


def shells(params: ModelParams) -> list[Shell]:
    """Ordered shells n = 1..n_steps tiling (kappa, lambda_] without overlap.

    Bounds are taken from a single ladder array so adjacent shells share
    their boundary bitwise.
    """
    bounds = [params.shell_radius(n) for n in range(params.n_steps + 1)]
    return [
        Shell(index=n, lower=bounds[n], upper=bounds[n - 1])
        for n in range(1, params.n_steps + 1)
    ]


def steps_for_lambda(lambda_: float, kappa: float, gamma_target: float) -> int:
    """Shell count whose derived ratio is closest to ``gamma_target``."""
    if not 0 < gamma_target < 1:
        raise ValueError(f"gamma_target must lie in (0, 1), got {gamma_target}")
    n = round(math.log(lambda_ / kappa) / -math.log(gamma_target))
    return max(1, n)


def with_lambda(params: ModelParams, lambda_: float) -> ModelParams:
    """Rescale the cutoff keeping (approximately) the same shell ratio."""
    n = steps_for_lambda(lambda_, params.kappa, params.gamma)
    return replace(params, lambda_=lambda_, n_steps=n)


def with_gamma_target(params: ModelParams, gamma_target: float) -> ModelParams:
    """Re-derive the shell count for a requested ratio at fixed cutoffs."""
    n = steps_for_lambda(params.lambda_, params.kappa, gamma_target)
    return replace(params, n_steps=n)
