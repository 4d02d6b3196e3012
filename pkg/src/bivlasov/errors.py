"""Typed failures raised by the solver.

Every abort class carries the CLI exit code it maps to, so the command layer
can translate exceptions without a lookup table of its own.
"""

from __future__ import annotations


class SolverError(Exception):
    """Base class for all solver failures."""

    exit_code = 1
    reason = "error"

    def __init__(self, message: str, **details):
        super().__init__(message)
        self.details = details

    def to_dict(self) -> dict:
        out = {"reason": self.reason, "message": str(self)}
        for key, value in self.details.items():
            out[key] = _plain(value)
        return out


class ConfigError(SolverError, ValueError):
    """Configuration document failed validation.

    ``violations`` lists every problem found, each as ``(path, message)``.
    """

    exit_code = 2
    reason = "config_error"

    def __init__(self, violations: list[tuple[str, str]]):
        self.violations = list(violations)
        text = "; ".join(f"{path}: {msg}" for path, msg in self.violations)
        super().__init__(f"invalid configuration: {text}", violations=self.violations)


class AssumptionError(SolverError):
    """Initial data fail one of the smallness/support assumptions."""

    exit_code = 3
    reason = "assumptions_failed"


class BlowUpProximityError(SolverError, ArithmeticError):
    """Transformed field angles came too close to the pole of the inverse map."""

    exit_code = 4
    reason = "blow_up_proximity"


class SeparationViolationError(SolverError):
    """Particle velocity reached a field characteristic speed."""

    exit_code = 5
    reason = "separation_violation"


class DomainExitError(SolverError):
    """Support of the solution reached the edge of the computational grid."""

    exit_code = 6
    reason = "domain_exit"


class PicardNonConvergenceError(SolverError):
    """Fixed-point iteration did not reach tolerance within ``max_iter``."""

    exit_code = 7
    reason = "picard_non_convergence"

    def __init__(self, message: str, trace=None, **details):
        super().__init__(message, **details)
        self.trace = trace


def _plain(value):
    # numpy scalars/tuples -> JSON-friendly builtins
    if hasattr(value, "item") and getattr(value, "ndim", 1) == 0:
        return value.item()
    if isinstance(value, (list, tuple)):
        return [_plain(v) for v in value]
    return value
