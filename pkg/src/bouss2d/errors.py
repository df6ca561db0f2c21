"""Exception types shared across the package.

The CLI maps these onto exit codes: ConfigError -> 3, solver failures
(NumericBlowupError, StepRejectedError) -> 2, everything else -> nonzero
generic failure.
"""

from __future__ import annotations


class ShapeError(ValueError):
    """Physical array dimensions do not match the grid."""


class GridMismatchError(ValueError):
    """Operands live on different grids."""


class SnapshotFormatError(ValueError):
    """Binary snapshot header is malformed or unsupported."""


class DomainError(ValueError):
    """A lookup-table function was evaluated outside its computed range."""


class NumericError(ArithmeticError):
    """Non-finite values encountered in field data."""


class NumericBlowupError(NumericError):
    """The solution left the representable range; carries the offending term."""

    def __init__(self, term: str, time: float, step: int | None = None):
        self.term = term
        self.time = time
        self.step = step
        where = f" (step {step})" if step is not None else ""
        super().__init__(f"non-finite values in term '{term}' at t={time:.6g}{where}")


class StepRejectedError(RuntimeError):
    """A fixed dt violates the stability bound."""

    def __init__(self, dt: float, bound: float, time: float):
        self.dt = dt
        self.bound = bound
        self.time = time
        super().__init__(
            f"dt={dt:.6g} exceeds the stability bound {bound:.6g} at t={time:.6g}"
        )


class ConfigError(ValueError):
    """Run configuration failed validation."""


class UndefinedRatioError(ValueError):
    """A dyadic block is identically zero, so its Bernstein ratio is undefined."""


class DegenerateInputError(ValueError):
    """An empirical-constant report has a zero right-hand side."""
