"""Exception types shared across the package.

Each class carries a ``category`` string that the command line uses to pick
an exit code.
"""

from __future__ import annotations


class CausalEnergyError(Exception):
    category = "error"


class ValidationError(CausalEnergyError, ValueError):
    """Input violates a documented bound (humidity out of range, bad row, ...)."""

    category = "validation"


class DuplicateTimestampError(ValidationError):
    def __init__(self, timestamp, line: int | None = None):
        where = f" (line {line})" if line is not None else ""
        super().__init__(f"duplicate timestamp {timestamp.isoformat()}{where}")
        self.timestamp = timestamp
        self.line = line


class EmptyJoinError(CausalEnergyError):
    category = "data"


class RankDeficientError(CausalEnergyError, ValueError):
    category = "numerical"

    def __init__(self, columns: list[str]):
        super().__init__(f"design matrix is rank deficient; collinear columns: {', '.join(columns)}")
        self.columns = columns


class ThinStratumError(CausalEnergyError, ValueError):
    category = "data"

    def __init__(self, what: str, count: int, required: int):
        super().__init__(f"{what} has {count} records, need at least {required}")
        self.count = count
        self.required = required


class DomainError(CausalEnergyError, ValueError):
    """An autodiff primitive was evaluated outside its domain."""

    category = "numerical"


class TapeMismatchError(CausalEnergyError, ValueError):
    category = "numerical"


class NonFiniteElboError(CausalEnergyError, FloatingPointError):
    category = "numerical"

    def __init__(self, value: float, latents: dict[str, float]):
        bad = ", ".join(f"{k}={v:.6g}" for k, v in latents.items())
        super().__init__(f"non-finite ELBO ({value}) at latents: {bad}")
        self.value = value
        self.latents = latents


class ConfigError(CausalEnergyError):
    category = "config"

    def __init__(self, problems: list[str]):
        super().__init__("invalid configuration:\n  " + "\n  ".join(problems))
        self.problems = problems
