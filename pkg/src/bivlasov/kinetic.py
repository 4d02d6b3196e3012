"""Semi-Lagrangian transport of the distribution function.

Phase space is x in [x_min, x_max] (nodes include both ends) times momenta
v = (v1, v2) in [-v_max, v_max]^2 sampled at cell centres, so that moments are
midpoint sums and odd integrands cancel exactly.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, DomainExitError
from .field_transform import RawFields
from .interp import interp1d_many, interp3d

MIN_NODES = 4


@dataclass(frozen=True)
class PhaseSpaceGrid:
    x_min: float
    x_max: float
    nx: int
    v_max: float
    nv1: int
    nv2: int

    def __post_init__(self):
        problems = []
        for name in ("nx", "nv1", "nv2"):
            if int(getattr(self, name)) < MIN_NODES:
                problems.append((name, f"grid too coarse: need >= {MIN_NODES} nodes"))
        if not self.x_max > self.x_min:
            problems.append(("x_max", "must exceed x_min"))
        if not self.v_max > 0:
            problems.append(("v_max", "must be positive"))
        if problems:
            raise ConfigError(problems)

    @property
    def x(self) -> np.ndarray:
        return np.linspace(self.x_min, self.x_max, self.nx)

    @property
    def dx(self) -> float:
        return (self.x_max - self.x_min) / (self.nx - 1)

    @property
    def dv1(self) -> float:
        return 2.0 * self.v_max / self.nv1

    @property
    def dv2(self) -> float:
        return 2.0 * self.v_max / self.nv2

    @property
    def v1(self) -> np.ndarray:
        return -self.v_max + (np.arange(self.nv1) + 0.5) * self.dv1

    @property
    def v2(self) -> np.ndarray:
        return -self.v_max + (np.arange(self.nv2) + 0.5) * self.dv2

    @property
    def shape(self) -> tuple[int, int, int]:
        return (self.nx, self.nv1, self.nv2)

    @property
    def x_weights(self) -> np.ndarray:
        """Trapezoid weights along x."""
        w = np.full(self.nx, self.dx)
        w[0] = w[-1] = 0.5 * self.dx
        return w

    def mesh(self):
        return np.meshgrid(self.x, self.v1, self.v2, indexing="ij")


@dataclass(frozen=True)
class DistributionGrid:
    grid: PhaseSpaceGrid
    values: np.ndarray

    def l1(self) -> float:
        """Integral of |f| over phase space."""
        g = self.grid
        return float(np.sum(g.x_weights * np.abs(self.values).sum(axis=(1, 2))) * g.dv1 * g.dv2)

    def mass(self) -> float:
        g = self.grid
        return float(np.sum(g.x_weights * self.values.sum(axis=(1, 2))) * g.dv1 * g.dv2)

    def sup(self) -> float:
        return float(np.max(self.values)) if self.values.size else 0.0


@dataclass(frozen=True)
class Moments:
    rho: np.ndarray
    j1: np.ndarray
    j2: np.ndarray
    n: np.ndarray
    d1: np.ndarray


@dataclass(frozen=True)
class CharacteristicState:
    x: float
    v1: float
    v2: float


def vhat(v1, v2):
    """Relativistic velocity v / sqrt(1 + |v|^2)."""
    g = np.sqrt(1.0 + np.square(v1) + np.square(v2))
    return v1 / g, v2 / g


def lorentz_force(d1, d2, b, v1, v2):
    """Generalized Lorentz force D + (vhat2, -vhat1) B for unit charge."""
    vh1, vh2 = vhat(v1, v2)
    return d1 + vh2 * b, d2 - vh1 * b


def _characteristic_rk4(x, v1, v2, h, start: RawFields, end: RawFields, x_nodes, order):
    """One classical RK4 step of the particle ODE over a signed interval ``h``.

    ``start`` holds the fields at the initial time of the step and ``end`` at
    the final time; the midpoint uses their average.
    """
    x0 = float(x_nodes[0])
    dx = float(x_nodes[1] - x_nodes[0])
    mid = RawFields.lerp(start, end, 0.5)

    def rhs(fields, X, V1, V2):
        d1, d2, b = interp1d_many((fields.d1, fields.d2, fields.b), x0, dx, X, order)
        g = np.sqrt(1.0 + V1 * V1 + V2 * V2)
        vh1 = V1 / g
        vh2 = V2 / g
        return vh1, d1 + vh2 * b, d2 - vh1 * b

    kx1, ka1, kb1 = rhs(start, x, v1, v2)
    hh = 0.5 * h
    kx2, ka2, kb2 = rhs(mid, x + hh * kx1, v1 + hh * ka1, v2 + hh * kb1)
    kx3, ka3, kb3 = rhs(mid, x + hh * kx2, v1 + hh * ka2, v2 + hh * kb2)
    kx4, ka4, kb4 = rhs(end, x + h * kx3, v1 + h * ka3, v2 + h * kb3)
    s = h / 6.0
    return (
        x + s * (kx1 + 2.0 * kx2 + 2.0 * kx3 + kx4),
        v1 + s * (ka1 + 2.0 * ka2 + 2.0 * ka3 + ka4),
        v2 + s * (kb1 + 2.0 * kb2 + 2.0 * kb3 + kb4),
    )


def trace_characteristic_back(end: CharacteristicState, dt: float, fields_old: RawFields,
                              fields_new: RawFields, x_nodes, order: int = 3
                              ) -> CharacteristicState:
    """Trace a particle characteristic from time t back to t - dt.

    ``fields_old`` are the fields at t - dt and ``fields_new`` those at t;
    in between they vary linearly in time.
    """
    if not dt > 0:
        raise ValueError("dt must be positive")
    x, v1, v2 = _characteristic_rk4(
        np.asarray(end.x, dtype=float), np.asarray(end.v1, dtype=float),
        np.asarray(end.v2, dtype=float), -dt, fields_new, fields_old, x_nodes, order)
    if not (x_nodes[0] <= x <= x_nodes[-1]):
        raise DomainExitError(
            f"characteristic left the x-domain at x = {float(x):.6g}",
            x=float(x), v1=float(v1), v2=float(v2))
    return CharacteristicState(float(x), float(v1), float(v2))


def trace_characteristics_forward(x, v1, v2, dt, fields_old: RawFields, fields_new: RawFields,
                                  x_nodes, order: int = 3):
    """Advance a set of particle characteristics from t to t + dt."""
    return _characteristic_rk4(np.asarray(x, dtype=float), np.asarray(v1, dtype=float),
                               np.asarray(v2, dtype=float), dt, fields_old, fields_new,
                               x_nodes, order)


def boundary_mass(values: np.ndarray, width: int = 2) -> float:
    """Largest |f| in the outer ``width`` layers of every grid direction."""
    w = width
    edges = (
        values[:w], values[-w:], values[:, :w], values[:, -w:], values[:, :, :w], values[:, :, -w:],
    )
    return float(max(np.max(np.abs(e)) for e in edges))


def check_support_inside(f: DistributionGrid, tol: float) -> None:
    edge = boundary_mass(f.values)
    if edge > tol:
        raise DomainExitError(
            f"distribution reached the phase-space boundary (|f| = {edge:.3e} > {tol:.3e})",
            boundary_value=edge)


def semi_lagrangian_step(f: DistributionGrid, fields_old: RawFields, fields_new: RawFields,
                         dt: float, order: int = 3, clip: bool = False,
                         boundary_tol: float | None = None,
                         kind: str = "spline") -> DistributionGrid:
    """Advance f by ``dt``: f(t + dt, z) = f(t, Z(t; t + dt, z)).

    Feet are found by an RK4 backward trace through fields varying linearly in
    time between ``fields_old`` (time t) and ``fields_new`` (time t + dt);
    f is evaluated there with :func:`bivlasov.interp.interp3d` of the given
    ``kind`` (cubic B-spline by default).
    Raises :class:`DomainExitError` when ``boundary_tol`` is given and the
    result has mass above it in the boundary layers.
    """
    g = f.grid
    X, V1, V2 = g.mesh()
    xf, v1f, v2f = _characteristic_rk4(X, V1, V2, -dt, fields_new, fields_old, g.x, order)
    values = interp3d(
        f.values,
        (g.x_min, g.v1[0], g.v2[0]),
        (g.dx, g.dv1, g.dv2),
        xf, v1f, v2f, order=order, clip=clip, kind=kind,
    )
    out = DistributionGrid(g, values)
    if boundary_tol is not None:
        check_support_inside(out, boundary_tol)
    return out


def compute_D1(rho: np.ndarray, dx: float) -> np.ndarray:
    """Cumulative trapezoid integral of rho from the left boundary."""
    rho = np.asarray(rho, dtype=float)
    out = np.zeros_like(rho)
    out[1:] = np.cumsum(0.5 * dx * (rho[1:] + rho[:-1]))
    return out


def compute_moments(f: DistributionGrid, n: np.ndarray) -> Moments:
    """Charge density, current density and D1 by midpoint sums over v."""
    g = f.grid
    cell = g.dv1 * g.dv2
    vh1, vh2 = vhat(g.v1[:, None], g.v2[None, :])
    vals = f.values
    density = vals.sum(axis=(1, 2)) * cell
    j1 = (vals * vh1).sum(axis=(1, 2)) * cell
    j2 = (vals * vh2).sum(axis=(1, 2)) * cell
    rho = density - n
    return Moments(rho=rho, j1=j1, j2=j2, n=np.asarray(n, dtype=float), d1=compute_D1(rho, g.dx))


def neutralize_background(f: DistributionGrid, n: np.ndarray | None) -> np.ndarray:
    """Scale ``n`` so that its x-integral equals the mass of f.

    With ``n=None`` the background is the v-integral of f itself, giving a
    locally neutral start.
    """
    g = f.grid
    density = f.values.sum(axis=(1, 2)) * g.dv1 * g.dv2
    if n is None:
        return density.copy()
    n = np.asarray(n, dtype=float)
    total_n = float(np.sum(g.x_weights * n))
    total_f = float(np.sum(g.x_weights * density))
    if total_n == 0.0:
        if total_f != 0.0:
            raise ConfigError([("initial_data.n", "background is zero but f carries mass")])
        return n.copy()
    return n * (total_f / total_n)


def continuity_residual(m_old: Moments, m_new: Moments, dt: float, dx: float):
    """Discrete continuity residual and the D1 consistency gap over one step.

    Returns ``(residual, d1_gap)`` where ``residual`` is the sup norm of
    (rho_new - rho_old)/dt + d/dx of the step-averaged j1 (centred
    differences), and ``d1_gap`` the sup norm of D1_new - (D1_old - dt *
    mean(j1)).
    """
    j1_mid = 0.5 * (m_old.j1 + m_new.j1)
    res = (m_new.rho - m_old.rho) / dt + np.gradient(j1_mid, dx, edge_order=2)
    gap = m_new.d1 - (m_old.d1 - dt * j1_mid)
    return float(np.max(np.abs(res))), float(np.max(np.abs(gap)))


def support_radius(f: DistributionGrid, rel_tol: float = 1e-6, f_ref: float | None = None) -> float:
    """Largest |v| among nodes where f exceeds ``rel_tol * f_ref``."""
    ref = f.sup() if f_ref is None else f_ref
    if ref <= 0:
        return 0.0
    g = f.grid
    occupied = np.any(f.values > rel_tol * ref, axis=0)
    if not np.any(occupied):
        return 0.0
    speed = np.hypot(g.v1[:, None], g.v2[None, :])
    return float(np.max(speed[occupied]))
