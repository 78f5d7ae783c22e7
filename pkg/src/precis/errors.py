"""Exception hierarchy shared across the package.

Everything raised on purpose derives from :class:`PrecisError`, so callers
can catch one base class.  Infeasibility is deliberately *not* an error in
the selection layer (it is the value ``inf``); :class:`InfeasibleDesign` is
raised only by the estimator entry points, where the caller asked for a
single concrete design.
"""


class PrecisError(Exception):
    """Base class for all errors raised by this package."""


class DimensionError(PrecisError, ValueError):
    """Matrix/vector dimensions are inconsistent."""


class InvalidArgument(PrecisError, ValueError):
    """Argument outside its documented domain (non-positive size, bad flag...)."""


class EmptySubset(PrecisError, ValueError):
    """A sensor subset was empty where a non-empty one is required."""


class InvalidSensor(PrecisError, ValueError):
    """Sensor id out of range or duplicated."""


class SymmetryError(PrecisError, ValueError):
    """A matrix required to be symmetric is not, beyond tolerance."""


class UnstableError(PrecisError, ValueError):
    """A matrix required to be Hurwitz has eigenvalues in the closed RHP."""


class AssignmentError(PrecisError, ValueError):
    """A variable assignment does not cover every declared variable."""


class ProgramError(PrecisError, ValueError):
    """An LMI program is structurally ill-posed for the solver."""


class InfeasibleDesign(PrecisError, RuntimeError):
    """No certified design could be produced for the requested bound."""


class RecoveryError(PrecisError, RuntimeError):
    """Estimator matrices could not be recovered (singular/ill-conditioned X)."""


class BudgetError(PrecisError, RuntimeError):
    """An enumeration budget would be exceeded."""


class FileFormatError(PrecisError, ValueError):
    """A plant/result text file is malformed.

    Carries the 1-based line number and the field being parsed so command
    line diagnostics can point at the offending spot.
    """

    def __init__(self, message, line=None, field=None):
        self.line = line
        self.field = field
        where = []
        if line is not None:
            where.append(f"line {line}")
        if field is not None:
            where.append(f"field '{field}'")
        suffix = f" ({', '.join(where)})" if where else ""
        super().__init__(message + suffix)
