from typing import Any, Optional


class ZrpFluxError(Exception):
    """Base class for all errors raised by zrpflux."""


class ParameterError(ZrpFluxError, ValueError):
    """A parameter lies outside the range an operation accepts."""


class PreconditionError(ZrpFluxError):
    """An operation was applied to a state that does not allow it, e.g. a jump from an empty site."""


class SiteRangeError(ZrpFluxError, IndexError):
    """A site or bond index lies outside the lattice window."""


class ShapeError(ZrpFluxError):
    """Two objects that must share a lattice window do not."""


class SupportError(ZrpFluxError):
    """The support of a test function escapes the lattice window."""


class ResolutionError(ZrpFluxError):
    """A mollifier is not resolved by the grid it is evaluated on."""


class MissingAccumulatorError(ZrpFluxError):
    """A trajectory lacks the time integrals an observable needs."""


class EventBudgetExceeded(ZrpFluxError):
    """The event loop hit its budget before reaching the horizon.

    The trajectory recorded up to that point is attached as `partial`.
    """

    def __init__(self, message: str, partial: Any = None):
        super().__init__(message)
        self.partial = partial


class SizeError(ZrpFluxError):
    """A state space is larger than the configured cap."""


class ProjectionError(ZrpFluxError):
    """A function is not mean-zero where it has to be."""


class SingularityError(ZrpFluxError):
    """A linear system is singular, e.g. a disconnected state space."""


class PrecisionError(ZrpFluxError):
    """A requested numerical tolerance cannot be reached."""


class DegeneracyError(ZrpFluxError):
    """An ensemble has zero variance where a regression needs spread."""


class FitError(ZrpFluxError):
    """A least-squares design is singular."""


class SpecError(ZrpFluxError):
    """Two run specifications are incompatible."""


class FunctionalError(ZrpFluxError):
    """An additive functional is not of a supported form."""


class ConfigError(ZrpFluxError):
    """A configuration file is invalid.

    :param field: section.key that failed validation
    :param line: 1-based line in the source file, if known
    """

    def __init__(self, message: str, field: Optional[str] = None, line: Optional[int] = None):
        location = ""
        if field:
            location += f" [{field}]"
        if line:
            location += f" (line {line})"
        super().__init__(message + location)
        self.field = field
        self.line = line


class AcceptanceFailure(ZrpFluxError):
    """A tolerance-based acceptance check did not pass."""
