"""Exception types shared across the package."""


class FluxgatesError(Exception):
    """Base class for all package errors."""


class ConvergenceFailure(FluxgatesError):
    """Kept energies moved by more than the tolerance when the basis grew."""


class InvalidEnvelope(FluxgatesError, ValueError):
    """A pulse envelope parameter set is inconsistent."""


class CommensurabilityViolation(FluxgatesError, ValueError):
    """A pulse duration or start time is off the commensurate lattice."""


class StepTooCoarse(FluxgatesError):
    """Halving the integration step changed the result beyond tolerance."""


class FitFailure(FluxgatesError):
    """A calibration or benchmarking fit did not converge or fit poorly."""


class DegenerateRatio(FluxgatesError):
    """Interleaved decay exceeds the reference decay beyond its uncertainty."""


class ConfigError(FluxgatesError, ValueError):
    """An experiment configuration is malformed."""


class BackendError(FluxgatesError):
    """The simulation backend failed while executing an experiment."""
