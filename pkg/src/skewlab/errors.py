"""Exception hierarchy.

Every error carries a stable machine-readable ``code`` and a distinct
process exit status, so that command-line runs and reports can name the
failure without parsing messages.
"""


class SkewLabError(Exception):
    """Base class for all library errors."""

    code = "E_SKEWLAB"
    exit_status = 1

    def __init__(self, message="", **details):
        super().__init__(message)
        self.details = details


class PreconditionViolation(SkewLabError, ValueError):
    code = "E_PRECONDITION"
    exit_status = 2


class ConfigInvalid(SkewLabError, ValueError):
    """Raised with a mapping ``field -> problem`` in ``details['fields']``."""

    code = "E_CONFIG_INVALID"
    exit_status = 3


class DegenerateParameter(SkewLabError, ValueError):
    code = "E_DEGENERATE_PARAMETER"
    exit_status = 4


class NonHyperbolicMatrix(SkewLabError, ValueError):
    code = "E_NON_HYPERBOLIC"
    exit_status = 5


class InsufficientWord(SkewLabError, IndexError):
    code = "E_INSUFFICIENT_WORD"
    exit_status = 6


class PrecisionExhausted(SkewLabError):
    code = "E_PRECISION_EXHAUSTED"
    exit_status = 7


class GapTooSmall(SkewLabError):
    code = "E_GAP_TOO_SMALL"
    exit_status = 8


class LatticeSearchFailed(SkewLabError):
    code = "E_LATTICE_SEARCH_FAILED"
    exit_status = 9


class InvalidSpecification(SkewLabError, ValueError):
    code = "E_INVALID_SPECIFICATION"
    exit_status = 10


class GridTooCoarse(SkewLabError, ValueError):
    code = "E_GRID_TOO_COARSE"
    exit_status = 11


class DegenerateFit(SkewLabError):
    code = "E_DEGENERATE_FIT"
    exit_status = 12


class EmptyDeviationSet(SkewLabError):
    code = "E_EMPTY_DEVIATION_SET"
    exit_status = 13


class ScheduleInfeasible(SkewLabError):
    code = "E_SCHEDULE_INFEASIBLE"
    exit_status = 14


class OscillationNotCertified(SkewLabError):
    """Carries the rejected certificate in ``details['certificate']``."""

    code = "E_OSCILLATION_NOT_CERTIFIED"
    exit_status = 15


ALL_ERRORS = (
    PreconditionViolation, ConfigInvalid, DegenerateParameter,
    NonHyperbolicMatrix, InsufficientWord, PrecisionExhausted, GapTooSmall,
    LatticeSearchFailed, InvalidSpecification, GridTooCoarse, DegenerateFit,
    EmptyDeviationSet, ScheduleInfeasible, OscillationNotCertified,
)
