"""Adversarially trained recurrent release mechanisms for smart-meter data.

A releaser network maps (useful signal, seed noise) to a sanitized
release; an attacker network tries to recover the private label sequence
from the release.  Training alternates attacker and releaser updates
under a distortion-minus-privacy objective.  Exact small-alphabet
information-theoretic oracles validate the bounds the objective relies
on.
"""

__version__ = "0.1.0"

from .errors import (
    ConfigError,
    DataFormatError,
    DegenerateInputError,
    MeterPrivError,
    MissingFileError,
    NumericError,
    UsageError,
)

__all__ = [
    "ConfigError",
    "DataFormatError",
    "DegenerateInputError",
    "MeterPrivError",
    "MissingFileError",
    "NumericError",
    "UsageError",
    "__version__",
]
