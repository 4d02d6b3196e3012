"""Runtime checks of the a priori bounds of the coupled solution.

Each frame evaluates the bound chain literally: measured quantities on the
left, initial-data norms and the envelope curves P(t), Theta(t) on the
right.  A false flag inside the certified interval points at a solver
defect, since the bounds hold for every exact solution.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, fields

import numpy as np

from .field_solver import InvariantGrid
from .field_transform import HALF_PI
from .horizon import Envelope, InitialDataSummary

# relative allowance for rounding when a bound is attained with equality
# (e.g. |D1|_inf = |f|_1 for a single-signed charge density)
ROUNDING = 1e-12


@dataclass(frozen=True)
class BoundTolerances:
    f_overshoot_rel: float = 1e-3
    envelope_slack: float = 1e-3
    support_growth_tol: float = 1e-6


@dataclass(frozen=True)
class GradientQuantities:
    u: np.ndarray
    w: np.ndarray
    u_max: float
    w_max: float


@dataclass(frozen=True)
class DiagnosticFrame:
    t: float
    step: int
    f_max: float
    f_min: float
    f_l1: float
    rho_sup: float
    j_sup: float
    j1_sup: float
    j2_sup: float
    k0_sup: float
    k1_sup: float
    k2_sup: float
    d1_sup: float
    d2_sup: float
    d_sup: float
    b_sup: float
    theta2_sup: float
    thetaB_sup: float
    angle_sum_max: float
    P_measured: float
    P_grid: float
    P_envelope: float
    Theta_envelope: float
    growth_bound: float
    separation_margin: float
    u_max: float
    w_max: float
    continuity_residual: float
    d1_gap: float
    certified: bool
    ok_f: bool
    ok_rho: bool
    ok_j: bool
    ok_d1: bool
    ok_k0: bool
    ok_k1: bool
    ok_k2: bool
    ok_d2: bool
    ok_b: bool
    ok_angle_sum: bool
    ok_envelope: bool
    ok_support_growth: bool
    ok_gradients_finite: bool

    @property
    def bound_flags(self) -> dict:
        return {f.name: getattr(self, f.name) for f in fields(self) if f.name.startswith("ok_")}

    @property
    def all_bounds_hold(self) -> bool:
        return all(self.bound_flags.values())

    def row(self) -> dict:
        return asdict(self)

    @classmethod
    def columns(cls) -> list[str]:
        return [f.name for f in fields(cls)]


def gradient_quantities(inv: InvariantGrid) -> GradientQuantities:
    """u = -(cos a + cos b) d_x alpha and w = (cos a + cos b) d_x beta.

    Derivatives are centred differences (second-order one-sided at the ends).
    """
    dx = inv.dx
    s = np.cos(inv.alpha) + np.cos(inv.beta)
    u = -s * np.gradient(inv.alpha, dx, edge_order=2)
    w = s * np.gradient(inv.beta, dx, edge_order=2)
    return GradientQuantities(u, w, float(np.max(np.abs(u))), float(np.max(np.abs(w))))


def envelope_values(envelope: Envelope, t: float) -> tuple[float, float]:
    """(P, Theta) of the envelope at ``t``; (inf, pi/2) past its sampled range."""
    if t <= envelope.t[-1]:
        return float(envelope.P_at(t)), float(envelope.Theta_at(t))
    return math.inf, HALF_PI


def bound_check_frame(state, s: InitialDataSummary, envelope: Envelope,
                      tol: BoundTolerances = BoundTolerances(),
                      certified_end: float = math.inf) -> DiagnosticFrame:
    """Evaluate every a priori bound on one simulation state.

    ``state`` is a :class:`bivlasov.coupling.SimState`.
    """
    m = state.moments
    fl = state.fields
    k = state.sources
    inv = state.inv
    P_env, Th_env = envelope_values(envelope, state.t)
    mass = s.f_l1 + s.n_l1
    tan_env = math.tan(Th_env) if Th_env < HALF_PI else math.inf
    cube = math.pi * s.f_sup * P_env ** 2 if s.f_sup > 0 else 0.0
    lift = 1.0 + ROUNDING

    vals = state.f.values
    f_max = float(np.max(vals)) if vals.size else 0.0
    j_abs = np.hypot(m.j1, m.j2)
    d_abs = np.hypot(fl.d1, fl.d2)
    angle_sum = np.abs(inv.theta2) + np.abs(inv.thetaB)
    grads = gradient_quantities(inv)

    def sup(a):
        return float(np.max(np.abs(a))) if np.size(a) else 0.0

    rho_sup, j_sup = sup(m.rho), sup(j_abs)
    k0, k1, k2 = sup(k.k0), sup(k.k1), sup(k.k2)
    d1_sup, d2_sup, b_sup = sup(fl.d1), sup(fl.d2), sup(fl.b)
    asum = sup(angle_sum)
    P_meas = state.markers.radius()
    growth_bound = s.P0 + state.growth_integral

    return DiagnosticFrame(
        t=float(state.t),
        step=int(state.step),
        f_max=f_max,
        f_min=float(np.min(vals)) if vals.size else 0.0,
        f_l1=state.f.l1(),
        rho_sup=rho_sup,
        j_sup=j_sup,
        j1_sup=sup(m.j1),
        j2_sup=sup(m.j2),
        k0_sup=k0,
        k1_sup=k1,
        k2_sup=k2,
        d1_sup=d1_sup,
        d2_sup=d2_sup,
        d_sup=sup(d_abs),
        b_sup=b_sup,
        theta2_sup=sup(inv.theta2),
        thetaB_sup=sup(inv.thetaB),
        angle_sum_max=asum,
        P_measured=P_meas,
        P_grid=state.grid_support_radius,
        P_envelope=P_env,
        Theta_envelope=Th_env,
        growth_bound=growth_bound,
        separation_margin=state.separation_margin,
        u_max=grads.u_max,
        w_max=grads.w_max,
        continuity_residual=state.continuity_residual,
        d1_gap=sup(m.d1 - state.d1_evolved),
        certified=bool(state.t <= certified_end),
        ok_f=f_max <= s.f_sup * (1.0 + tol.f_overshoot_rel),
        ok_rho=rho_sup <= (cube + s.n_sup) * lift,
        ok_j=j_sup <= cube * lift,
        ok_d1=d1_sup <= mass * lift,
        ok_k0=k0 <= (cube + s.n_sup) * lift,
        ok_k1=k1 <= cube * lift,
        ok_k2=k2 <= cube * lift,
        ok_d2=d2_sup <= math.sqrt(1.0 + mass * mass) * tan_env * lift,
        ok_b=b_sup <= tan_env * lift,
        ok_angle_sum=asum <= Th_env * lift,
        ok_envelope=P_meas <= P_env + tol.envelope_slack,
        ok_support_growth=P_meas <= growth_bound + tol.support_growth_tol,
        ok_gradients_finite=bool(np.all(np.isfinite(grads.u)) and np.all(np.isfinite(grads.w))),
    )


def support_growth_check(history, P0: float | None = None, tol: float = 1e-6) -> bool:
    """Measured support radius against P + int_0^t (|D|_inf + |B|_inf) ds.

    ``history`` is a sequence of frames (or objects with ``t``,
    ``P_measured``, ``d_sup`` and ``b_sup``); the integral is the cumulative
    trapezoid rule over the frame times.  ``P0`` defaults to the first
    measured radius.
    """
    history = list(history)
    if len(history) < 2:
        raise ValueError("need at least two frames")
    t = np.array([h.t for h in history], dtype=float)
    P = np.array([h.P_measured for h in history], dtype=float)
    g = np.array([h.d_sup + h.b_sup for h in history], dtype=float)
    integral = np.concatenate([[0.0], np.cumsum(0.5 * np.diff(t) * (g[1:] + g[:-1]))])
    base = P[0] if P0 is None else P0
    return bool(np.all(P <= base + integral + tol))
