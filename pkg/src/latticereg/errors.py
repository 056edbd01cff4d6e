"""Exception types shared across the package."""


class LatticeRegError(Exception):
    """Base class for all package-specific errors."""


class ConfigError(LatticeRegError):
    """Invalid or inconsistent experiment configuration."""


class BracketingError(LatticeRegError):
    """Operator bracket construction or validation failed."""


class CalibrationError(LatticeRegError):
    """Noise calibration could not reach the requested level."""


class UnsupportedProxError(LatticeRegError):
    """The fidelity has no pointwise prox; the solver handles it by splitting."""


class WellPosednessError(LatticeRegError):
    """The discrepancy equation has no solution for the given noise level."""


class MonotonicityError(LatticeRegError):
    """A quantity that must be monotone in alpha was observed not to be."""


class FixtureError(LatticeRegError):
    """A source-condition fixture could not be constructed or validated."""


class OracleError(LatticeRegError):
    """A brute-force reference computation failed or is out of scope."""
