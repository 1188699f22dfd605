"""Exception types shared across the toolkit."""

from __future__ import annotations


class CadseqError(Exception):
    """Base class for every domain error raised by this package."""


class SourceError(CadseqError):
    """Error tied to a 1-based line of DSL source text."""

    def __init__(self, message: str, line: int):
        super().__init__(f"line {line}: {message}")
        self.line = line


class DslSyntaxError(SourceError):
    """A source line is not a well-formed call."""


class UnknownFunctionError(SourceError):
    """A source line calls a function the DSL does not define."""


class ArityError(SourceError):
    """A DSL call has the wrong number of arguments."""


class RangeError(CadseqError):
    """A numeric value lies outside its allowed range."""

    def __init__(self, message: str, line: int | None = None):
        super().__init__(message if line is None else f"line {line}: {message}")
        self.line = line


class InvalidProgramError(CadseqError):
    """A program failed grammar validation."""

    def __init__(self, message: str, report=None):
        super().__init__(message)
        self.report = report


class ProgramTooLongError(CadseqError):
    """A program does not fit in the fixed matrix row budget."""


class MalformedRowError(CadseqError):
    """A matrix row violates the used/unused slot pattern for its type."""

    def __init__(self, message: str, row: int):
        super().__init__(f"row {row}: {message}")
        self.row = row


class DegenerateChordError(CadseqError):
    """Arc start and end points coincide; no center is defined."""


class OpenProfileError(CadseqError):
    """A curve chain does not close into a usable profile."""


class SelfIntersectingError(CadseqError):
    """Profile boundary segments cross each other."""


class EmptyResultError(CadseqError):
    """A solid operation left zero occupied voxels."""


class ParseFailureError(CadseqError):
    """A program could not be turned into at least one non-empty solid body.

    This is exactly the failure counted by the parsing-rate metric.
    """

    def __init__(self, message: str, cause: Exception | None = None):
        super().__init__(message)
        self.cause = cause


class EmptySceneError(CadseqError):
    """No scene was supplied to render."""


class DimensionMismatchError(CadseqError):
    """Two arrays that must share a shape do not."""


class LatticeMismatchError(CadseqError):
    """Two voxel grids do not share resolution and bounds."""


class EmptyInputError(CadseqError):
    """A metric was asked to aggregate over zero items."""


class SynthesisExhaustedError(CadseqError):
    """Rejection sampling failed to produce a valid program."""

    def __init__(self, sequence_id: str, attempts: int):
        super().__init__(
            f"no valid program for template {sequence_id} after {attempts} attempts"
        )
        self.sequence_id = sequence_id
        self.attempts = attempts
