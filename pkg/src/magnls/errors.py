"""Exception hierarchy shared by the solver modules."""


class MagnlsError(Exception):
    """Base class for all package errors."""


class NonSubcritical(MagnlsError):
    """Exponent outside the subcritical range for the requested dimension."""


class BracketFailure(MagnlsError):
    """Shooting could not bracket the central value of the ground state."""


class UnknownPreset(MagnlsError):
    pass


class MissingParam(MagnlsError):
    pass


class BadGeometry(MagnlsError):
    """Patch or cutoff geometry violates a layout constraint."""


class IllConditionedFit(MagnlsError):
    pass


class KrylovStall(MagnlsError):
    """The projected Krylov solve did not reach its tolerance."""


class ContractionFailure(MagnlsError):
    def __init__(self, message, ratio=None):
        super().__init__(message)
        self.ratio = ratio


class OuterDivergence(MagnlsError):
    pass


class SeedRejected(MagnlsError):
    pass


class ConfigError(MagnlsError):
    """Malformed experiment configuration; message names the offending field."""
