"""Exception hierarchy.

Every error raised on purpose by the package derives from ``CuspLabError``
so callers (and the CLI) can tell modelled failures from bugs.
"""


class CuspLabError(Exception):
    """Base class for all package errors."""


class DomainError(CuspLabError, ValueError):
    """Radius or other argument outside its admissible domain."""


class InvalidMetricError(CuspLabError, ValueError):
    """Gram matrix is not symmetric positive definite."""


class ParameterError(CuspLabError, ValueError):
    """Model parameter outside its admissible range."""


class GridError(CuspLabError, ValueError):
    """Radial grid unsuitable for the requested operation."""


class DataError(CuspLabError, ValueError):
    """Non-finite or malformed sample data."""


class HypothesisViolation(CuspLabError, ValueError):
    """Input violates a hypothesis of an ODE lemma (roots, resonance)."""


class ResonanceError(HypothesisViolation):
    """Forcing rate coincides with a characteristic root."""


class ODEOverflowError(CuspLabError, ArithmeticError):
    """Integration of a growing mode exceeded the representable range."""

    def __init__(self, message, index):
        super().__init__(message)
        self.index = index


class BoundaryError(CuspLabError, ValueError):
    """Boundary data inconsistent with the requested solution class."""


class DecompositionError(CuspLabError):
    """No finite envelope constants certify a rate decomposition."""

    def __init__(self, message, worst_index=None, worst_r=None):
        super().__init__(message)
        self.worst_index = worst_index
        self.worst_r = worst_r


class EnvelopeViolation(CuspLabError, AssertionError):
    """Internal consistency failure: a by-construction bound was violated."""


class CertificationError(CuspLabError):
    """A measured estimate failed its certificate; ``tag`` names the estimate."""

    def __init__(self, message, tag, worst_index=None):
        super().__init__(f"[{tag}] {message}")
        self.tag = tag
        self.worst_index = worst_index


class L2ViolationError(CertificationError):
    """A growing fundamental mode survived in data assumed to be L2."""


class ExtractionError(CertificationError):
    """The extracted constant tensor is not trace free."""


class StepError(CertificationError):
    """A bootstrap step failed one of its estimates."""


class ConfigError(CuspLabError, ValueError):
    """Experiment configuration could not be parsed or validated."""
