"""Exception types shared across the package."""

from __future__ import annotations


class ProvingGroundError(Exception):
    """Base class for all package errors."""


class InvalidParameterError(ProvingGroundError, ValueError):
    """A calibration or configuration value violates its invariant."""


class InvalidStateError(ProvingGroundError, ValueError):
    """A state object is malformed (e.g. a non-orthonormal rotation)."""


class SimulationDiverged(ProvingGroundError, RuntimeError):
    """A sub-model produced a non-finite value."""

    def __init__(self, submodel: str, detail: str = ""):
        self.submodel = submodel
        msg = f"simulation diverged in {submodel}"
        if detail:
            msg += f": {detail}"
        super().__init__(msg)


class ConfigError(ProvingGroundError):
    """Campaign configuration could not be parsed or validated."""


class TraceError(ProvingGroundError):
    """A recorded trace is truncated or corrupt."""

    def __init__(self, line: int, detail: str):
        self.line = line
        super().__init__(f"trace line {line}: {detail}")
