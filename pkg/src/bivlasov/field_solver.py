"""Riemann-invariant field update along field characteristics.

In the invariants alpha = theta2 - thetaB and beta = theta2 + thetaB the
field system is diagonal:

    d_t alpha - cos(beta)  d_x alpha = S
    d_t beta  + cos(alpha) d_x beta  = S

with the same scalar source S for both equations.  One step traces each grid
node back along its characteristic, interpolates the old invariant at the
foot and adds the trapezoid quadrature of S along the characteristic.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from .errors import DomainExitError
from .field_transform import (
    SourceCoefficients,
    check_angle_guard,
    inhomogeneous_rhs,
)
from .interp import interp1d

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class InvariantGrid:
    """Riemann invariants on the uniform spatial grid ``x``."""

    x: np.ndarray
    alpha: np.ndarray
    beta: np.ndarray

    @classmethod
    def from_angles(cls, x, theta2, thetaB) -> "InvariantGrid":
        theta2 = np.asarray(theta2, dtype=float)
        thetaB = np.asarray(thetaB, dtype=float)
        return cls(np.asarray(x, dtype=float), theta2 - thetaB, theta2 + thetaB)

    @property
    def theta2(self) -> np.ndarray:
        return 0.5 * (self.alpha + self.beta)

    @property
    def thetaB(self) -> np.ndarray:
        return 0.5 * (self.beta - self.alpha)

    @property
    def dx(self) -> float:
        return float(self.x[1] - self.x[0])


@dataclass(frozen=True)
class FieldCharacteristic:
    """Feet of the alpha (xi) and beta (eta) characteristics."""

    xi: np.ndarray
    eta: np.ndarray


def _trace(x, dt, field_old, field_new, x_nodes, order, sign, allow_outside):
    """RK4 backward trace of dy/dt = sign * cos(g(t, y)) over one step.

    ``g`` varies linearly in time from ``field_old`` (t - dt) to
    ``field_new`` (t).
    """
    if not dt > 0:
        raise ValueError("dt must be positive")
    x = np.asarray(x, dtype=float)
    x0 = float(x_nodes[0])
    h = float(x_nodes[1] - x_nodes[0])
    mid = 0.5 * (np.asarray(field_old) + np.asarray(field_new))

    def speed(g, y):
        return sign * np.cos(interp1d(g, x0, h, y, order))

    k1 = speed(field_new, x)
    k2 = speed(mid, x - 0.5 * dt * k1)
    k3 = speed(mid, x - 0.5 * dt * k2)
    k4 = speed(field_old, x - dt * k3)
    foot = x - dt / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
    if not allow_outside:
        lo, hi = float(x_nodes[0]), float(x_nodes[-1])
        bad = (foot < lo) | (foot > hi)
        if np.any(bad):
            i = int(np.argmax(bad))
            raise DomainExitError(
                f"field characteristic foot {float(np.ravel(foot)[i]):.6g} outside [{lo}, {hi}]",
                foot=float(np.ravel(foot)[i]))
    return foot


def trace_xi(x, dt, beta_old, beta_new, x_nodes, order: int = 3, allow_outside: bool = False):
    """Foot xi(t - dt; t, x) of the alpha-characteristic, speed -cos(beta).

    Zero-extended data outside the grid make feet slightly past the boundary
    harmless for the grid update, which passes ``allow_outside=True``.
    """
    return _trace(x, dt, beta_old, beta_new, x_nodes, order, -1.0, allow_outside)


def trace_eta(x, dt, alpha_old, alpha_new, x_nodes, order: int = 3, allow_outside: bool = False):
    """Foot eta(t - dt; t, x) of the beta-characteristic, speed +cos(alpha)."""
    return _trace(x, dt, alpha_old, alpha_new, x_nodes, order, +1.0, allow_outside)


def source_term(alpha, beta, k: SourceCoefficients):
    """Nodal source S shared by both invariant equations."""
    theta2 = 0.5 * (alpha + beta)
    thetaB = 0.5 * (beta - alpha)
    return inhomogeneous_rhs(theta2, thetaB, k)


def field_step(inv: InvariantGrid, k_old: SourceCoefficients, k_new: SourceCoefficients,
               dt: float, order: int = 3, n_iter: int = 2, eps_guard: float | None = 1e-3,
               boundary_tol: float | None = None, return_feet: bool = False):
    """Advance the invariants by one step of size ``dt``.

    The update is

        alpha(t+dt, x) = alpha(t, xi) + dt/2 * (S(t, xi) + S(t+dt, x))

    and likewise for beta along eta.  Speeds and the new-level source depend
    on the unknown new state, so the step is iterated ``n_iter`` times: the
    first pass freezes speeds at time t and uses S(t, .) on both ends, later
    passes use the previous iterate.

    Raises :class:`BlowUpProximityError` when ``eps_guard`` is given and the
    new state comes within ``eps_guard`` of pi/2, and
    :class:`DomainExitError` when ``boundary_tol`` is given and a nonzero
    invariant reaches the outermost nodes.
    """
    x = inv.x
    x0 = float(x[0])
    h = inv.dx
    s_old = source_term(inv.alpha, inv.beta, k_old)

    alpha_new = inv.alpha
    beta_new = inv.beta
    xi = eta = x
    for it in range(max(1, n_iter)):
        xi = trace_xi(x, dt, inv.beta, beta_new, x, order, allow_outside=True)
        eta = trace_eta(x, dt, inv.alpha, alpha_new, x, order, allow_outside=True)
        a_foot = interp1d(inv.alpha, x0, h, xi, order)
        b_foot = interp1d(inv.beta, x0, h, eta, order)
        sa_foot = interp1d(s_old, x0, h, xi, order)
        sb_foot = interp1d(s_old, x0, h, eta, order)
        if it == 0:
            alpha_next = a_foot + dt * sa_foot
            beta_next = b_foot + dt * sb_foot
        else:
            s_new = source_term(alpha_new, beta_new, k_new)
            alpha_next = a_foot + 0.5 * dt * (sa_foot + s_new)
            beta_next = b_foot + 0.5 * dt * (sb_foot + s_new)
        alpha_new, beta_new = alpha_next, beta_next

    if n_iter <= 1:
        # single pass: still apply the trapezoid rule with the new sources
        s_new = source_term(alpha_new, beta_new, k_new)
        alpha_new = a_foot + 0.5 * dt * (sa_foot + s_new)
        beta_new = b_foot + 0.5 * dt * (sb_foot + s_new)

    out = InvariantGrid(x, alpha_new, beta_new)
    if eps_guard is not None:
        check_angle_guard(out.alpha, out.beta, eps_guard, x)
    if boundary_tol is not None:
        edge = max(np.max(np.abs(out.alpha[:2])), np.max(np.abs(out.alpha[-2:])),
                   np.max(np.abs(out.beta[:2])), np.max(np.abs(out.beta[-2:])))
        if edge > boundary_tol:
            raise DomainExitError(
                f"field wave reached the x-boundary (|angle| = {edge:.3e})", boundary_value=edge)
    if return_feet:
        return out, FieldCharacteristic(xi, eta)
    return out
