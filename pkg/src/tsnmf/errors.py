"""Package exception hierarchy, mapped to CLI exit codes."""

from __future__ import annotations


class TsnmfError(Exception):
    """Base class; carries the process exit code for the CLI."""

    exit_code = 1

    def __init__(self, message: str, *, stage: str | None = None):
        super().__init__(message)
        self.stage = stage


class UsageError(TsnmfError):
    """Invalid arguments or configuration."""

    exit_code = 1


class DataError(TsnmfError):
    """Malformed, inconsistent, or non-finite input data."""

    exit_code = 2


class NumericalError(TsnmfError):
    """A numerical routine failed to reach its contract."""

    exit_code = 3
