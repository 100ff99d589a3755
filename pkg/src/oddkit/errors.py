"""Exception hierarchy shared by the library and the CLI.

The CLI maps these onto process exit codes: 1 for validation failures,
2 for backend protocol failures, 3 for I/O failures.
"""

from __future__ import annotations

EXIT_OK = 0
EXIT_VALIDATION = 1
EXIT_PROTOCOL = 2
EXIT_IO = 3


class OddError(Exception):
    """Base class for all errors raised by this package."""

    exit_code = EXIT_VALIDATION


class ValidationError(OddError):
    """Input data violates an invariant (bad box, join mismatch, bad config)."""

    exit_code = EXIT_VALIDATION


class ConfigurationError(ValidationError):
    """A component was wired up in a way that cannot work (e.g. missing capability)."""


class JoinMismatchError(ValidationError):
    """A detection dump or score file references frames absent from the dataset."""


class ProtocolError(OddError):
    """A backend subprocess violated the wire protocol or failed to serve a request.

    Carries the last few protocol lines exchanged with the backend so the
    failure can be diagnosed without re-running.
    """

    exit_code = EXIT_PROTOCOL

    def __init__(self, message: str, transcript: tuple[str, ...] = ()) -> None:
        if transcript:
            message = message + "\n  recent protocol lines:\n    " + "\n    ".join(transcript)
        super().__init__(message)
        self.transcript = transcript


class InputError(OddError):
    """A file could not be read, written, or parsed as JSON."""

    exit_code = EXIT_IO
