"""Shell-by-shell ground-state construction for the cutoff one-particle
Yukawa model on truncated boson Fock spaces."""

__version__ = "0.1.0"

from .fock import Discretization, FockBasis, ModeSet, build_basis, build_modes
from .hamiltonian import FiberOperator, SlicePiece, assemble, slice_piece
from .model import ModelParams, Shell, dispersion, form_factor, shells, validate
from .multiscale import ScaleRecord, Trajectory, run_trajectory
from .spectral import Contour, GroundResult, SolverOptions, ground_state

__all__ = [
    "__version__",
    "Contour",
    "Discretization",
    "FiberOperator",
    "FockBasis",
    "GroundResult",
    "ModelParams",
    "ModeSet",
    "ScaleRecord",
    "Shell",
    "SlicePiece",
    "SolverOptions",
    "Trajectory",
    "assemble",
    "build_basis",
    "build_modes",
    "dispersion",
    "form_factor",
    "ground_state",
    "run_trajectory",
    "shells",
    "slice_piece",
    "validate",
]
