"""Exception taxonomy shared across the package.

Every error raised on a numerical code path derives from SmallNoiseError so
the CLI can map families to exit codes without string matching.
"""
from __future__ import annotations


class SmallNoiseError(Exception):
    """Base class for all package errors."""

    exit_code = 3

    def __init__(self, message: str, hint: str | None = None):
        super().__init__(message)
        self.message = message
        self.hint = hint

    def payload(self) -> dict:
        out = {"type": type(self).__name__, "message": self.message}
        if self.hint:
            out["hint"] = self.hint
        return out


class ConfigError(SmallNoiseError):
    """Bad configuration: schema violation, invalid parameter combination."""

    exit_code = 2


class InvalidModelError(ConfigError):
    """Model fails a structural requirement (unknown name, bad constants)."""


class SimulationDivergedError(SmallNoiseError):
    """A simulated path left the finite range."""


class NumericalInstabilityError(SmallNoiseError):
    """An iteration produced values outside its admissible region."""


class GridTooSmallError(SmallNoiseError):
    """Probability mass escaped the spatial grid."""


class ToleranceError(SmallNoiseError):
    """An iterative routine failed to meet its tolerance within its budget."""


class InternalConsistencyError(SmallNoiseError):
    """Two redundant evaluations of the same quantity disagree."""


class IOFailureError(SmallNoiseError):
    """Filesystem problem while reading or writing run artifacts."""

    exit_code = 4
