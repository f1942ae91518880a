"""Exception hierarchy and warnings used across the engine."""


class ScatwaveError(Exception):
    """Base class for all engine errors."""


class ParseError(ScatwaveError):
    """Malformed input file; carries the offending line number when known."""

    def __init__(self, message, line=None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line


class MeshError(ScatwaveError):
    """Radial mesh is not strictly increasing or is too short."""


class ValidationError(ScatwaveError):
    """Loaded data violates a physical invariant (e.g. same-symmetry crossing)."""


class DomainError(ScatwaveError):
    """Argument outside the mathematical domain of an operation."""


class IntegrationError(ScatwaveError):
    """ODE integration failed to keep the required accuracy."""


class PlacementError(ScatwaveError):
    """Initial wave packet clips the wall or starts inside the absorber."""


class BlowupError(ScatwaveError):
    """Non-finite amplitudes appeared during propagation."""

    def __init__(self, message, time=None):
        super().__init__(message)
        self.time = time


class EnergyOutOfBandError(ScatwaveError):
    """Requested energy lies outside the packet's usable spectral band."""


class MatchingError(ScatwaveError):
    """Asymptotic matching matrix is singular; raise R_match."""


class IncompleteDataError(ScatwaveError):
    """Cross-section assembly is missing one or more symmetry blocks."""

    def __init__(self, message, missing=()):
        super().__init__(message)
        self.missing = tuple(missing)


class ConvergenceWarning(UserWarning):
    """Run finished without meeting a convergence/absorption target."""
