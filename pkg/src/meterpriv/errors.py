"""Exception taxonomy shared by all meterpriv modules.

Each class maps to one CLI error category (and exit code); library code
raises these instead of bare ValueError so callers can tell a bad config
from a bad data file from a numerical blow-up.
"""


class MeterPrivError(Exception):
    """Base class for all errors raised by this package."""

    category = "error"


class ConfigError(MeterPrivError):
    """Invalid configuration: bad field value, inconsistent architecture."""

    category = "config"


class UsageError(MeterPrivError):
    """API misuse: mismatched shapes, stale tape, empty batch."""

    category = "usage"


class NumericError(MeterPrivError):
    """Non-finite value encountered where a finite one is required."""

    category = "numeric"


class DataFormatError(MeterPrivError):
    """Malformed data file; message carries the offending location."""

    category = "data-format"


class DegenerateInputError(UsageError):
    """Statistically degenerate input (all-zero reference, zero variance)."""

    category = "degenerate-input"


class MissingFileError(MeterPrivError):
    """A referenced input file does not exist."""

    category = "missing-file"
