"""Exception hierarchy shared across the package."""

from __future__ import annotations


class FalsibenchError(Exception):
    """Base class for all errors raised by falsibench."""


class ParameterError(FalsibenchError, ValueError):
    """Invalid dimensions, out-of-range hyperparameters, malformed inputs."""


class GenerationError(FalsibenchError):
    """A generator could not produce a valid draw within its redraw budget."""


class IntegrationBlowupError(GenerationError):
    """Non-finite state while integrating an ODE generator."""

    def __init__(self, step: int, message: str | None = None):
        self.step = step
        super().__init__(message or f"non-finite state at integration step {step}")


class TrainingDivergenceError(FalsibenchError):
    """Non-finite training loss."""

    def __init__(self, epoch: int):
        self.epoch = epoch
        super().__init__(f"training loss became non-finite at epoch {epoch}")


class DegenerateExtractionError(FalsibenchError):
    """The off-diagonal weight product is identically zero."""


class ConvergenceError(FalsibenchError):
    """An iterative solver hit its sweep budget before reaching tolerance."""

    def __init__(self, gap: float, sweeps: int):
        self.gap = gap
        self.sweeps = sweeps
        super().__init__(f"no convergence after {sweeps} sweeps (duality gap {gap:.3e})")


class UndefinedAUROCError(FalsibenchError):
    """Ground truth has no positives or no negatives after exclusions."""


class UndefinedTruthError(UndefinedAUROCError):
    """An inclusion policy leaves an empty positive or negative set."""


class IncompleteGridError(FalsibenchError):
    """Records are missing for some (cell, method) combinations."""

    def __init__(self, missing):
        self.missing = list(missing)
        preview = ", ".join(map(str, self.missing[:10]))
        more = "" if len(self.missing) <= 10 else f" (+{len(self.missing) - 10} more)"
        super().__init__(f"incomplete grid, missing: {preview}{more}")


class IngestionError(FalsibenchError):
    """A real-data CSV or manifest could not be ingested."""


class RegistrationError(FalsibenchError):
    """A method could not be registered."""


class PlanError(FalsibenchError):
    """An experiment plan failed validation."""
