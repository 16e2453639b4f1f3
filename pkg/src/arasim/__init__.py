"""Open-system simulation of adiabatic reverse annealing on the p-spin model.

The subpackages build the Hamiltonian path (:mod:`arasim.model`), analyse its
spectrum (:mod:`arasim.spectrum`), describe an Ohmic dephasing bath
(:mod:`arasim.bath`), integrate the adiabatic master equation
(:mod:`arasim.lindblad`) or unravel it into trajectories (:mod:`arasim.mcwf`),
score results (:mod:`arasim.metrics`) and drive configured sweeps
(:mod:`arasim.runner`).
"""

from importlib.metadata import PackageNotFoundError, version

try:
    __version__ = version("artifact")
except PackageNotFoundError:  # running from a source tree
    __version__ = "0.1.0"

from .bath import BathSpec, CouplingKind, gamma, lamb_kernel
from .errors import (ArasimError, BasisMismatchError, DegenerateGapError, DimensionError, DomainError,
                     FitError, NormUnderflowError, SolverError, StepSizeError)
from .lindblad import AmeResult, DensityMatrix, build_couplings, gibbs_state, integrate_ame
from .mcwf import EnsembleResult, TrajectoryConfig, evolve_closed, evolve_trajectory, run_ensemble
from .metrics import TTSFlag, TTSRecord, fit_scaling, success_probability, tts
from .model import AnnealSpec, BasisKind, build_basis, build_operators, hamiltonian_at, initial_state
from .spectrum import adiabatic_timescale, gap_profile, gap_scaling

__all__ = [
    "__version__",
    "AnnealSpec", "BasisKind", "build_basis", "build_operators", "hamiltonian_at", "initial_state",
    "gap_profile", "gap_scaling", "adiabatic_timescale",
    "BathSpec", "CouplingKind", "gamma", "lamb_kernel",
    "DensityMatrix", "AmeResult", "build_couplings", "gibbs_state", "integrate_ame",
    "TrajectoryConfig", "EnsembleResult", "evolve_trajectory", "evolve_closed", "run_ensemble",
    "TTSFlag", "TTSRecord", "tts", "success_probability", "fit_scaling",
    "ArasimError", "DomainError", "DimensionError", "BasisMismatchError", "DegenerateGapError",
    "SolverError", "StepSizeError", "NormUnderflowError", "FitError",
]
