"""Exception types shared across the pipeline.

The CLI maps these to exit codes: usage/config -> 1, I/O -> 2,
format/parse -> 3, backend -> 4.
"""


class FragVqaError(Exception):
    """Base class for all fragvqa errors."""


class ParseError(FragVqaError):
    """Malformed stream or file; carries the byte offset where parsing failed."""

    def __init__(self, message, offset=None):
        if offset is not None:
            message = f"{message} (at byte offset {offset})"
        super().__init__(message)
        self.offset = offset


class UnsupportedFormatError(FragVqaError):
    """Well-formed input using a feature outside the supported profile."""


class FormatError(FragVqaError):
    """Input violates a structural contract (sizes, shapes, schemas)."""


class BackendError(FragVqaError):
    """Inference backend failed or produced invalid output."""


class ConfigError(FragVqaError):
    """Invalid or inconsistent configuration."""
