"""Flat key-value run configuration.

One include-free file, ``key = value`` per line, ``#`` comments.  Every key
is validated before any computation starts and unknown keys are a hard
error; the fully resolved table is embedded into output provenance so runs
are reconstructible from their outputs alone.
"""

from __future__ import annotations

from dataclasses import dataclass

from .errors import ConfigError
from .fock import Discretization
from .model import ModelParams
from .spectral import SolverOptions


def _parse_bool(s: str) -> bool:
    t = s.strip().lower()
    if t in ("true", "yes", "on", "1"):
        return True
    if t in ("false", "no", "off", "0"):
        return False
    raise ValueError(f"not a boolean: {s!r}")


def _parse_floats(s: str) -> tuple[float, ...]:
    items = [x for x in s.replace(",", " ").split() if x]
    return tuple(float(x) for x in items)


def _parse_ints(s: str) -> tuple[int, ...]:
    return tuple(int(x) for x in s.replace(",", " ").split() if x)


def _parse_vec3(s: str) -> tuple[float, float, float]:
    v = _parse_floats(s)
    if len(v) != 3:
        raise ValueError(f"expected 3 components, got {len(v)}")
    return v


# key -> (default, parser, unit/description)
KEYS: dict[str, tuple] = {
    # model (energy units unless stated)
    "m": (1.0, float, "nucleon mass, > 0"),
    "mu": (2.0, float, "meson mass, > 1 unless allow_small_mu"),
    "g": (0.03, float, "coupling constant, |g| <= 1, dimensionless"),
    "lambda": (8.0, float, "ultraviolet cutoff, > 1"),
    "kappa": (1.0, float, "infrared cutoff, in (0, lambda)"),
    "n_steps": (6, int, "number of shells; ratio gamma = (kappa/lambda)^(1/n_steps)"),
    "p": ((0.0, 0.0, 0.2), _parse_vec3, "total momentum, 3 components"),
    "p_max": (0.3, float, "momentum bound, in (0, 1/2)"),
    "theta": (0.2, float, "gap parameter, in (1/8, 1/4)"),
    "zeta": (0.45, float, "gap parameter, > 1/4 with 1 - theta - p_max >= zeta"),
    "allow_small_mu": (False, _parse_bool, "admit mu <= 1 (gap guarantees unproven)"),
    # discretization
    "radial_order": (2, int, "Gauss-Legendre nodes per shell, >= 1"),
    "angular_order": (6, int, "directions per radius, one of 2/6/8/12"),
    "b_max": (2, int, "boson-number truncation, >= 1"),
    "basis_cap": (200_000, int, "hard cap on occupation-basis size"),
    "dense_cap": (4000, int, "largest dimension for dense oracle checks"),
    "b_max_scan": ((), _parse_ints, "optional caps for a truncation-convergence scan"),
    # solver
    "tol_eig": (1e-10, float, "ground-state residual tolerance, relative to |H|"),
    "tol_lin": (1e-12, float, "shifted linear-solve tolerance, relative"),
    "tol_proj": (1e-10, float, "contour-quadrature settling tolerance"),
    "tol_series": (1e-9, float, "power-series truncation tolerance"),
    "max_iter": (5000, int, "eigensolver iteration cap"),
    "contour_points_init": (16, int, "initial quadrature nodes, even, >= 8"),
    "contour_points_max": (256, int, "quadrature node cap under doubling"),
    "seed": (1234, int, "seed for deterministic start vectors"),
    "contraction_iters": (24, int, "power-iteration steps for contraction estimates"),
    "contraction_probes": (2, int, "contour probe points for contraction (0 skips)"),
    # run control
    "backend": ("contour", str, "projector backend: contour | neumann"),
    "strict_gap": ("warn", str, "gap-bound violations: warn | error"),
    # sweep
    "sweep_axis": ("lambda", str, "sweep axis: lambda | g | gamma | p"),
    "sweep_values": ((16.0, 32.0, 64.0, 128.0, 256.0), _parse_floats,
                     "sweep points along the axis"),
    # output
    "formats": ("csv,json,dat", str, "output formats to write"),
}


@dataclass
class RunConfig:
    """Resolved configuration: every key present, defaults filled in."""

    values: dict
    source: str = "<defaults>"

    def __getitem__(self, key: str):
        return self.values[key]

    def model_params(self) -> ModelParams:
        v = self.values
        return ModelParams(
            m=v["m"], mu=v["mu"], g=v["g"], lambda_=v["lambda"], kappa=v["kappa"],
            n_steps=v["n_steps"], p_max=v["p_max"], theta=v["theta"],
            zeta=v["zeta"], allow_small_mu=v["allow_small_mu"],
        )

    def discretization(self) -> Discretization:
        v = self.values
        return Discretization(
            radial_order=v["radial_order"], angular_order=v["angular_order"],
            b_max=v["b_max"], basis_cap=v["basis_cap"], dense_cap=v["dense_cap"],
        )

    def solver_options(self) -> SolverOptions:
        v = self.values
        return SolverOptions(
            tol_eig=v["tol_eig"], tol_lin=v["tol_lin"], tol_proj=v["tol_proj"],
            tol_series=v["tol_series"], max_iter=v["max_iter"],
            contour_points_init=v["contour_points_init"],
            contour_points_max=v["contour_points_max"], seed=v["seed"],
            contraction_iters=v["contraction_iters"],
            contraction_probes=v["contraction_probes"],
        )

    @property
    def p(self) -> tuple[float, float, float]:
        return self.values["p"]

    def resolved_dict(self) -> dict:
        """JSON-ready copy of every resolved key."""
        out = {}
        for k, v in self.values.items():
            out[k] = list(v) if isinstance(v, tuple) else v
        return out


def default_config() -> RunConfig:
    return RunConfig({k: entry[0] for k, entry in KEYS.items()})


def parse_config_text(text: str, source: str = "<string>") -> RunConfig:
    values = {k: entry[0] for k, entry in KEYS.items()}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{source}:{lineno}: expected 'key = value', got {raw!r}")
        key, _, val = line.partition("=")
        key = key.strip()
        val = val.strip()
        if key not in KEYS:
            raise ConfigError(f"{source}:{lineno}: unknown key {key!r}")
        parser = KEYS[key][1]
        try:
            values[key] = parser(val)
        except (ValueError, TypeError) as err:
            raise ConfigError(f"{source}:{lineno}: bad value for {key!r}: {err}") from err
    _check_enums(values, source)
    return RunConfig(values, source=source)


def _check_enums(values: dict, source: str) -> None:
    if values["backend"] not in ("contour", "neumann"):
        raise ConfigError(f"{source}: backend must be 'contour' or 'neumann'")
    if values["strict_gap"] not in ("warn", "error"):
        raise ConfigError(f"{source}: strict_gap must be 'warn' or 'error'")
    if values["sweep_axis"] not in ("lambda", "g", "gamma", "p"):
        raise ConfigError(f"{source}: sweep_axis must be one of lambda/g/gamma/p")


def parse_config_file(path) -> RunConfig:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            text = fh.read()
    except OSError as err:
        raise ConfigError(f"cannot read config {path}: {err}") from err
    return parse_config_text(text, source=str(path))


def config_from_dict(d: dict) -> RunConfig:
    """Rebuild a RunConfig from a resolved provenance dictionary."""
    values = {}
    for k, entry in KEYS.items():
        if k in d:
            v = d[k]
            values[k] = tuple(v) if isinstance(entry[0], tuple) else v
        else:
            values[k] = entry[0]
    unknown = set(d) - set(KEYS)
    if unknown:
        raise ConfigError(f"unknown keys in stored config: {sorted(unknown)}")
    _check_enums(values, "<dict>")
    return RunConfig(values, source="<dict>")
