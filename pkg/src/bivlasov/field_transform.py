"""Algebra of the reduced Born-Infeld field (b = 1 units).

The field state (D1, D2, B) is mapped to angles

    sin(theta1) = D1 / sqrt(1 + |D|^2)
    sin(theta2) = D2 / sqrt(1 + |D|^2)
    sin(thetaB) = B  / sqrt(1 + B^2)

in which the two-by-two hyperbolic system for (D2, B) becomes diagonal in the
Riemann invariants alpha = theta2 - thetaB and beta = theta2 + thetaB, with
characteristic speeds -cos(beta) and cos(alpha).

All functions accept scalars or numpy arrays and broadcast.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import BlowUpProximityError

HALF_PI = 0.5 * np.pi

# arcsin arguments within this distance of +-1 are rounding, beyond it a bug
ASIN_CLAMP_TOL = 1e-14


@dataclass(frozen=True)
class RawFieldPoint:
    """Physical fields: electric displacement (d1, d2) and magnetic field b."""

    d1: float | np.ndarray
    d2: float | np.ndarray
    b: float | np.ndarray


@dataclass(frozen=True)
class ThetaFieldPoint:
    theta1: float | np.ndarray
    theta2: float | np.ndarray
    thetaB: float | np.ndarray

    @property
    def alpha(self):
        return self.theta2 - self.thetaB

    @property
    def beta(self):
        return self.theta2 + self.thetaB


@dataclass(frozen=True)
class SourceCoefficients:
    k0: float | np.ndarray
    k1: float | np.ndarray
    k2: float | np.ndarray


@dataclass(frozen=True)
class RawFields:
    """Nodal field arrays on the spatial grid."""

    d1: np.ndarray
    d2: np.ndarray
    b: np.ndarray

    @property
    def e2(self) -> np.ndarray:
        return constitutive_EH(RawFieldPoint(self.d1, self.d2, self.b))[0]

    @property
    def h(self) -> np.ndarray:
        return constitutive_EH(RawFieldPoint(self.d1, self.d2, self.b))[1]

    @staticmethod
    def lerp(old: "RawFields", new: "RawFields", w: float) -> "RawFields":
        """Linear interpolation in time, ``w = 0`` gives ``old``."""
        if w == 0.0:
            return old
        if w == 1.0:
            return new
        return RawFields(
            (1.0 - w) * old.d1 + w * new.d1,
            (1.0 - w) * old.d2 + w * new.d2,
            (1.0 - w) * old.b + w * new.b,
        )


def _require_finite(*arrays) -> None:
    for a in arrays:
        if not np.all(np.isfinite(a)):
            raise ValueError("field values must be finite")


def safe_arcsin(s):
    """arcsin that forgives rounding excursions past +-1 but nothing larger."""
    s = np.asarray(s, dtype=float)
    excess = np.abs(s) - 1.0
    if np.any(excess > ASIN_CLAMP_TOL):
        raise ValueError(f"arcsin argument out of range by {float(excess.max()):.3e}")
    return np.arcsin(np.clip(s, -1.0, 1.0))


def to_theta(p: RawFieldPoint) -> ThetaFieldPoint:
    """Map physical fields to transformed angles.

    Evaluated through the equivalent tangent forms, e.g. tan(theta2) =
    d2 / sqrt(1 + d1^2), which never produce an out-of-range sine argument
    and keep full relative precision for large fields.
    """
    d1, d2, b = (np.asarray(v, dtype=float) for v in (p.d1, p.d2, p.b))
    _require_finite(d1, d2, b)
    theta1 = np.arctan(d1 / np.sqrt(1.0 + d2 * d2))
    theta2 = np.arctan(d2 / np.sqrt(1.0 + d1 * d1))
    thetaB = np.arctan(b)
    return ThetaFieldPoint(_unwrap(theta1), _unwrap(theta2), _unwrap(thetaB))


def from_theta(theta2, thetaB, d1):
    """Recover (d2, b) from the angles and the longitudinal field d1."""
    theta2 = np.asarray(theta2, dtype=float)
    thetaB = np.asarray(thetaB, dtype=float)
    d1 = np.asarray(d1, dtype=float)
    _require_finite(theta2, thetaB, d1)
    if np.any(np.abs(theta2) >= HALF_PI) or np.any(np.abs(thetaB) >= HALF_PI):
        raise BlowUpProximityError(
            "angle at or beyond pi/2: field blow-up",
            theta2_max=float(np.max(np.abs(theta2))),
            thetaB_max=float(np.max(np.abs(thetaB))),
        )
    d2 = np.sqrt(1.0 + d1 * d1) * np.tan(theta2)
    b = np.tan(thetaB)
    return _unwrap(d2), _unwrap(b)


def eigenvalues_theta(theta2, thetaB):
    """Characteristic speeds (-cos(beta), cos(alpha))."""
    theta2 = np.asarray(theta2, dtype=float)
    thetaB = np.asarray(thetaB, dtype=float)
    return _unwrap(-np.cos(theta2 + thetaB)), _unwrap(np.cos(theta2 - thetaB))


def eigenvalues_raw(p: RawFieldPoint):
    """Eigenvalues of the quasilinear matrix written in the physical fields."""
    d1, d2, b = (np.asarray(v, dtype=float) for v in (p.d1, p.d2, p.b))
    denom = np.sqrt(1.0 + d1 * d1 + d2 * d2) * np.sqrt(1.0 + b * b)
    root = np.sqrt(1.0 + d1 * d1)
    return _unwrap((d2 * b - root) / denom), _unwrap((d2 * b + root) / denom)


def quasilinear_matrix(p: RawFieldPoint):
    """Matrix A and source factors (C1, C2) of the (D2, B) system.

    The system reads d/dt (D2, B) + A d/dx (D2, B) = (C1 rho - j2, C2 rho).
    Returns ``A`` with shape ``(2, 2) + shape`` and the pair ``(C1, C2)``.
    """
    d1, d2, b = (np.asarray(v, dtype=float) for v in (p.d1, p.d2, p.b))
    dd = 1.0 + d1 * d1 + d2 * d2
    bb = 1.0 + b * b
    diag = d2 * b / (np.sqrt(dd) * np.sqrt(bb))
    a12 = np.sqrt(dd) / bb**1.5
    a21 = np.sqrt(bb) * (1.0 + d1 * d1) / dd**1.5
    A = np.array([[diag, a12], [a21, diag]])
    c1 = -d1 * b / (np.sqrt(dd) * np.sqrt(bb))
    c2 = np.sqrt(bb) * d1 * d2 / dd**1.5
    return A, (c1, c2)


def left_eigenvectors(p: RawFieldPoint):
    """Left eigenvectors (l1, l2) of :func:`quasilinear_matrix`.

    Only the transformed solver is implemented; these are kept for checking
    the diagonalization.
    """
    d1, d2, b = (np.asarray(v, dtype=float) for v in (p.d1, p.d2, p.b))
    first = np.sqrt(1.0 + d1 * d1) / (1.0 + d1 * d1 + d2 * d2)
    second = 1.0 / (1.0 + b * b)
    return np.array([first, -second]), np.array([first, second])


def sources(rho, j1, j2, d1) -> SourceCoefficients:
    """Source coefficients k0, k1, k2 driving the invariant equations."""
    rho, j1, j2, d1 = (np.asarray(v, dtype=float) for v in (rho, j1, j2, d1))
    q = 1.0 + d1 * d1
    return SourceCoefficients(
        _unwrap(-rho * d1 / q),
        _unwrap(j1 * d1 / q),
        _unwrap(-j2 / np.sqrt(q)),
    )


def inhomogeneous_rhs(theta2, thetaB, k: SourceCoefficients):
    """Common right-hand side of both invariant equations.

    cos(theta2) * (k0 sin(thetaB) + k1 sin(theta2) + k2 cos(theta2))
    """
    c2 = np.cos(theta2)
    return c2 * (k.k0 * np.sin(thetaB) + k.k1 * np.sin(theta2) + k.k2 * c2)


def constitutive_EH(p: RawFieldPoint):
    """Reduced constitutive relations giving (E2, H) from (D, B)."""
    d1, d2, b = (np.asarray(v, dtype=float) for v in (p.d1, p.d2, p.b))
    sd = np.sqrt(1.0 + d1 * d1 + d2 * d2)
    sb = np.sqrt(1.0 + b * b)
    return _unwrap(sb * d2 / sd), _unwrap(sd * b / sb)


def angle_sum(theta2, thetaB):
    """Pointwise |theta2| + |thetaB| (equal to max(|alpha|, |beta|))."""
    return np.abs(theta2) + np.abs(thetaB)


def check_angle_guard(alpha, beta, eps_guard: float, x=None) -> None:
    """Raise if any node has |theta2| + |thetaB| >= pi/2 - eps_guard."""
    s = np.maximum(np.abs(alpha), np.abs(beta))
    bad = ~(s < HALF_PI - eps_guard)  # NaN counts as bad
    if np.any(bad):
        i = int(np.argmax(np.where(np.isfinite(s), s, np.inf)))
        raise BlowUpProximityError(
            f"|theta2|+|thetaB| = {float(s.flat[i]):.6f} reached pi/2 - {eps_guard:g}",
            node=i,
            x=None if x is None else float(np.asarray(x).flat[i]),
            angle_sum=float(s.flat[i]),
            eps_guard=eps_guard,
        )


def _unwrap(a):
    # keep scalar in, scalar out
    a = np.asarray(a)
    return float(a) if a.ndim == 0 else a
