"""Exception types raised across the package."""


class ArasimError(Exception):
    """Base class for all package errors."""


class DomainError(ArasimError, ValueError):
    """A parameter lies outside its admissible range."""


class DimensionError(ArasimError, ValueError):
    """The requested Hilbert space is larger than the configured cap."""


class BasisMismatchError(ArasimError, ValueError):
    """Objects built for different bases were combined."""


class DegenerateGapError(ArasimError, ArithmeticError):
    """A spectral gap is too small for the requested quantity."""


class SolverError(ArasimError, RuntimeError):
    """An eigensolver, quadrature or root finder did not converge."""


class StepSizeError(SolverError):
    """The adaptive integrator could not meet its tolerance."""


class NormUnderflowError(SolverError):
    """A trajectory norm decayed below representable precision."""


class FitError(ArasimError, RuntimeError):
    """A least-squares fit failed or is ill-posed."""
