"""Exception hierarchy shared by the library and the CLI.

The CLI maps these onto process exit codes: usage errors exit 2, data and
file-format errors exit 3, numeric failures (NaN/Inf encountered) exit 4.
"""


class HtrmError(Exception):
    """Base class for all errors raised by this package."""


class UsageError(HtrmError):
    """Caller violated a precondition (bad shape, bad axis, bad config)."""

    exit_code = 2


class DataFormatError(HtrmError):
    """A file or stream does not match its declared format."""

    exit_code = 3


class NumericError(HtrmError):
    """A computation produced NaN or Inf."""

    exit_code = 4
