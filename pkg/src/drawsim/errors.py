"""Shared exception types for the drawsim pipeline."""


class DrawSimError(Exception):
    """Base class for all pipeline errors."""


class InvariantViolation(DrawSimError):
    """A domain object failed one of its structural invariants."""


class StandardsParseError(DrawSimError):
    """The standards file could not be parsed.

    Carries the file path and the 1-based record number so the offending
    line can be located.
    """

    def __init__(self, message: str, *, path: str = "", record: int = 0):
        super().__init__(message)
        self.path = path
        self.record = record


class CoverageError(DrawSimError):
    """A unified output failed prompt-profile coverage after repair.

    Carries the evidence ids left uncovered so callers can report them.
    """

    def __init__(self, message: str, *, uncovered_can=(), uncovered_cannot=()):
        super().__init__(message)
        self.uncovered_can = list(uncovered_can)
        self.uncovered_cannot = list(uncovered_cannot)


class MapGenerationError(DrawSimError):
    """A concept map failed structural validation after repair.

    Carries the ordered violation list from the validator.
    """

    def __init__(self, message: str, *, violations=()):
        super().__init__(message)
        self.violations = list(violations)


class InfeasibleSampleError(DrawSimError):
    """A sampling plan could not satisfy its balance constraints."""


class ChecksumError(DrawSimError):
    """A persisted file does not match its recorded content hash."""
