"""Exceptions raised by the training harness."""

from __future__ import annotations


class HarnessError(Exception):
    """Base class for harness errors."""


class DatasetMissingError(HarnessError):
    """A dataset directory or one of its files is absent."""


class ShapeMismatchError(HarnessError):
    """A matrix or image does not have the expected shape."""


class MissingLatentError(HarnessError):
    """An image id has no entry in the stage-1 latent table."""


class DimensionMismatchError(HarnessError):
    """Stage-1 and stage-2 latent dimensions do not agree."""
