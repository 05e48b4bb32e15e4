"""Shared exception types.

InputError (and subclasses) mean the caller supplied something invalid and
map to CLI exit code 2; CheckpointError means a stored artifact is corrupt
or inconsistent and maps to exit code 3.
"""


class InputError(ValueError):
    """Invalid argument, shape, or value supplied by the caller."""


class ConfigError(InputError):
    """Invalid configuration (dimensions, empty pools, bad hyperparameters)."""


class VocabularyError(InputError):
    """Token outside the vocabulary."""


class CheckpointError(RuntimeError):
    """Unreadable, truncated, or incompatible checkpoint data."""
