"""Exception types raised by the package."""


class ConfigError(ValueError):
    """Configuration file is malformed or contains unknown keys."""


class BasisSizeError(RuntimeError):
    """Requested occupation basis exceeds the configured hard cap."""

    def __init__(self, size, cap):
        self.size = size
        self.cap = cap
        super().__init__(
            f"occupation basis would hold {size} states, above the hard cap {cap}"
        )


class SolverConvergenceError(RuntimeError):
    """An iterative solve did not reach its tolerance within the iteration cap."""


class DegenerateGroundStateError(RuntimeError):
    """Two lowest eigenvalues coincide to working precision; the construction
    assumes a unique ground state."""


class ResolventBreakdownError(RuntimeError):
    """Shifted linear solve hit a (near-)singular shift."""


class SeriesDivergenceError(RuntimeError):
    """Resolvent power series terms stopped decreasing; the coupling is too
    large for this shell."""


class ProjectorCollapseError(RuntimeError):
    """Spectral projector returned a near-zero vector; the scale-by-scale
    induction broke down."""


class TrajectoryError(RuntimeError):
    """A scale step of a trajectory failed; carries the failing scale index."""

    def __init__(self, scale, cause):
        self.scale = scale
        self.cause = cause
        super().__init__(f"trajectory failed at scale {scale}: {cause}")


class FitError(ValueError):
    """A scaling fit was refused (too few points or no signal)."""
