"""Exception types shared across the package."""


class ErgmFlowError(Exception):
    """Base class for all ergmflow errors."""


class ValidationError(ErgmFlowError, ValueError):
    """Raised when inputs violate a documented contract (bad ids, malformed
    files, unresolvable covariate names, out-of-range values)."""


class EstimationError(ErgmFlowError, RuntimeError):
    """Raised when an estimation run cannot proceed (non-finite objective,
    divergent parameters, empty sample)."""
