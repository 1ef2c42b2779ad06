"""Exception types raised by markovcalc.

Every error derives from :class:`MarkovCalcError`, so callers (and the CLI)
can catch the whole family at once. Validation errors additionally derive
from :class:`InputError`.
"""


class MarkovCalcError(Exception):
    """Base class for all package errors."""


class InputError(MarkovCalcError, ValueError):
    """An input violates a structural invariant."""


class NotSelfAdjoint(InputError):
    pass


class PositiveOffDiagonal(InputError):
    pass


class RowSumViolation(InputError):
    pass


class NegativeSpectrum(InputError):
    pass


class DimensionMismatch(InputError):
    pass


class DomainViolation(InputError):
    """A Bellman argument lies outside the admissible domain."""


class GammaOnUnitCircle(InputError):
    pass


class MultiplierUndefinedAtEigenvalue(InputError):
    pass


class CalibrationFailed(MarkovCalcError):
    """No constants passing every sampled property were found.

    Attributes
    ----------
    prop : str
        Name of the first property that still failed.
    witness : dict
        Sample point (or pair) realising the worst violation.
    """

    def __init__(self, prop, witness, message=""):
        self.prop = prop
        self.witness = witness
        super().__init__(message or f"calibration failed on '{prop}' at {witness}")


class QuadratureNotConverged(MarkovCalcError):
    pass


class GridTooCoarse(MarkovCalcError):
    pass


class TailNotConverged(MarkovCalcError):
    pass


class GammaEvalUnstable(MarkovCalcError):
    pass


class FitUnstable(MarkovCalcError):
    pass


class NumericalOverflow(MarkovCalcError):
    pass
