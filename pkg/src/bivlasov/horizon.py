"""Existence horizons, the momentum-support envelope and assumption checks.

The envelope solves the ODE system

    P'(t)     = 2 sqrt(1 + (|f|_1 + |n|_1)^2) / cos(Theta(t))
    Theta'(t) = |n|_inf + 3 pi |f|_inf P(t)^2

with P(0) = P0 and Theta(0) = |theta2|_inf + |thetaB|_inf.  Theta bounds
|theta2| + |thetaB| for all later times and P bounds the momentum support,
as long as Theta stays below pi/2 (horizon T1) and below arctan(1/P)
(horizon T2, which keeps particles slower than the field waves).
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.integrate import solve_ivp
from scipy.interpolate import CubicHermiteSpline
from scipy.optimize import brentq

from .errors import AssumptionError
from .field_transform import HALF_PI

log = logging.getLogger(__name__)

DEFAULT_T_MAX = 1.0e3
DEFAULT_ENVELOPE_DT = 1.0e-3
DEFAULT_SAFETY = 0.01
BISECT_RTOL = 1e-12
# leave fixed-step RK4 in t once h * Theta' / cos(Theta) exceeds this: the step
# would change Theta too much or P' = c / cos(Theta) is about to blow up
TAIL_SWITCH = 1e-2
# the tail integration stops this far below pi/2; the rest is added in closed form
TAIL_GAP = 1e-13
TAIL_SAMPLES = 4801
EXCEEDS = "exceeds t_max"


@dataclass(frozen=True)
class InitialDataSummary:
    theta2_sup: float
    thetaB_sup: float
    f_sup: float
    f_l1: float
    n_sup: float
    n_l1: float
    P0: float

    def __post_init__(self):
        for name in ("theta2_sup", "thetaB_sup", "f_sup", "f_l1", "n_sup", "n_l1", "P0"):
            value = getattr(self, name)
            if not (np.isfinite(value) and value >= 0):
                raise ValueError(f"{name} must be finite and nonnegative, got {value}")

    @property
    def theta0(self) -> float:
        return self.theta2_sup + self.thetaB_sup

    @property
    def a2(self) -> bool:
        return self.theta0 < HALF_PI

    @property
    def a3_margin(self) -> float:
        """arctan(1/P0) - Theta0; positive when the fields are small enough."""
        return math.atan2(1.0, self.P0) - self.theta0

    @property
    def a3(self) -> bool:
        return self.a3_margin > 0

    @property
    def speed_factor(self) -> float:
        return 2.0 * math.sqrt(1.0 + (self.f_l1 + self.n_l1) ** 2)

    def to_dict(self) -> dict:
        return {k: float(getattr(self, k)) for k in
                ("theta2_sup", "thetaB_sup", "f_sup", "f_l1", "n_sup", "n_l1", "P0")}


def _rhs(s: InitialDataSummary, P, Theta):
    return s.speed_factor / math.cos(Theta), s.n_sup + 3.0 * math.pi * s.f_sup * P * P


def _rk4(s, P, Theta, h):
    """One RK4 step; returns None if any stage leaves Theta < pi/2."""
    def ok(th):
        return th < HALF_PI

    if not ok(Theta):
        return None
    a1, b1 = _rhs(s, P, Theta)
    t2 = Theta + 0.5 * h * b1
    if not ok(t2):
        return None
    a2, b2 = _rhs(s, P + 0.5 * h * a1, t2)
    t3 = Theta + 0.5 * h * b2
    if not ok(t3):
        return None
    a3, b3 = _rhs(s, P + 0.5 * h * a2, t3)
    t4 = Theta + h * b3
    if not ok(t4):
        return None
    a4, b4 = _rhs(s, P + h * a3, t4)
    Pn = P + h / 6.0 * (a1 + 2 * a2 + 2 * a3 + a4)
    Tn = Theta + h / 6.0 * (b1 + 2 * b2 + 2 * b3 + b4)
    if not (np.isfinite(Pn) and ok(Tn)):
        return None
    return Pn, Tn


@dataclass
class Envelope:
    """Sampled envelope curves; ``T0`` is the time Theta reaches pi/2.

    ``T0`` is infinite when the integration reached ``t_max`` without Theta
    approaching pi/2.  Samples ``t[:n_fixed]`` come from fixed-step RK4 in
    t; the remainder (if any) from the Theta-parameterized tail, whose dense
    solution ``tail`` maps Theta to (t, P).
    """

    summary: InitialDataSummary
    t: np.ndarray
    P: np.ndarray
    Theta: np.ndarray
    t_max: float
    dt: float
    T0: float = math.inf
    n_fixed: int | None = None
    tail: object = field(default=None, repr=False)
    _spline: tuple | None = field(default=None, repr=False)

    def __post_init__(self):
        if self.n_fixed is None:
            self.n_fixed = len(self.t)

    def _splines(self):
        if self._spline is None:
            s = self.summary
            dP = s.speed_factor / np.cos(self.Theta)
            dT = s.n_sup + 3.0 * math.pi * s.f_sup * self.P ** 2
            if len(self.t) < 2:
                self._spline = (None, None)
            else:
                self._spline = (CubicHermiteSpline(self.t, self.P, dP),
                                CubicHermiteSpline(self.t, self.Theta, dT))
        return self._spline

    def _eval(self, which, t):
        t = np.asarray(t, dtype=float)
        if np.any(t < 0) or np.any(t > self.t[-1] * (1 + 1e-12) + 1e-300):
            raise ValueError(f"envelope sampled only on [0, {self.t[-1]}]")
        sp = self._splines()[which]
        if sp is None:
            arr = self.P if which == 0 else self.Theta
            out = np.full(t.shape, arr[0])
        else:
            out = sp(np.minimum(t, self.t[-1]))
        return float(out) if out.ndim == 0 else out

    def P_at(self, t):
        return self._eval(0, t)

    def Theta_at(self, t):
        return self._eval(1, t)

    def k_tilde(self, t):
        """Source bound |n|_inf + 3 pi |f|_inf P(t)^2 along the envelope."""
        s = self.summary
        return s.n_sup + 3.0 * math.pi * s.f_sup * np.square(self.P_at(t))


def solve_envelope(s: InitialDataSummary, t_max: float = DEFAULT_T_MAX,
                   dt: float = DEFAULT_ENVELOPE_DT) -> Envelope:
    """Integrate the envelope ODE up to ``t_max`` or until Theta reaches pi/2.

    Fixed-step RK4 in t is used while Theta is comfortably below pi/2.  Near
    blow-up the integration continues with Theta as independent variable,

        dt/dTheta = 1 / k,   dP/dTheta = c / (cos(Theta) k),   k = Theta',

    whose right-hand side stays bounded in t, and ``T0`` is read off there.
    """
    if not s.a2:
        raise AssumptionError(
            f"initial angle sum {s.theta0:.6g} is not below pi/2", theta0=s.theta0)
    if not (dt > 0 and t_max > 0):
        raise ValueError("t_max and dt must be positive")
    n = int(math.ceil(t_max / dt - 1e-9))
    h = t_max / n

    if s.f_sup == 0.0 and s.n_sup == 0.0:
        # Theta constant, P linear: RK4 is exact, so write the samples directly
        t = np.linspace(0.0, t_max, n + 1)
        P = s.P0 + s.speed_factor / math.cos(s.theta0) * t
        return Envelope(s, t, P, np.full_like(t, s.theta0), t_max, h)

    ts = [0.0]
    Ps = [s.P0]
    Ths = [s.theta0]
    T0 = math.inf
    P, Th = s.P0, s.theta0
    near_blowup = False
    for i in range(n):
        k = s.n_sup + 3.0 * math.pi * s.f_sup * P * P
        nxt = None if h * k / math.cos(Th) > TAIL_SWITCH else _rk4(s, P, Th, h)
        if nxt is None:
            near_blowup = True
            break
        P, Th = nxt
        ts.append((i + 1) * h)
        Ps.append(P)
        Ths.append(Th)
    n_fixed = len(ts)
    tail = None
    if near_blowup:
        tail, T0, (tt, tP, tTh) = _tail(s, ts[-1], P, Th)
        # sample times crowd together below float resolution as t -> T0
        keep = (tt <= t_max) & (tt > np.maximum.accumulate(np.concatenate(([ts[-1]], tt[:-1]))))
        if T0 > t_max:
            T0 = math.inf
        ts.extend(tt[keep])
        Ps.extend(tP[keep])
        Ths.extend(tTh[keep])
    return Envelope(s, np.array(ts), np.array(Ps), np.array(Ths), t_max, h, T0=T0,
                    n_fixed=n_fixed, tail=tail)


def _tail(s: InitialDataSummary, t0: float, P0: float, Th0: float):
    """Integrate from (t0, P0, Th0) up to Theta = pi/2 - TAIL_GAP.

    The independent variable is z = -log(pi/2 - Theta); with g = e^{-z},

        dt/dz = g / k,   dP/dz = c g / (sin(g) k),

    which is smooth all the way to the blow-up.  Returns a callable
    Theta -> (t, P), the blow-up time and samples (excluding the start
    point) spaced geometrically in pi/2 - Theta.
    """
    c = s.speed_factor

    def rhs(z, y):
        g = math.exp(-z)
        k = s.n_sup + 3.0 * math.pi * s.f_sup * y[1] * y[1]
        return [g / k, c * (g / math.sin(g)) / k]

    z0, z1 = -math.log(HALF_PI - Th0), -math.log(TAIL_GAP)
    sol = solve_ivp(rhs, (z0, z1), [t0, P0], method="DOP853", rtol=1e-13, atol=1e-15,
                    dense_output=True)
    if not sol.success:  # pragma: no cover - DOP853 failure would be a bug
        raise RuntimeError(f"envelope tail integration failed: {sol.message}")
    t_end, P_end = sol.y[0, -1], sol.y[1, -1]
    # dt/dTheta = 1/k <= 1/k(P_end) over the remaining gap
    T0 = float(t_end + TAIL_GAP / (s.n_sup + 3.0 * math.pi * s.f_sup * P_end * P_end))

    def at_theta(th):
        return sol.sol(np.clip(-np.log(HALF_PI - np.asarray(th, dtype=float)), z0, z1))

    z = np.linspace(z0, z1, TAIL_SAMPLES)[1:]
    y = sol.sol(z)
    return at_theta, T0, (y[0], y[1], HALF_PI - np.exp(-z))


def _bisect_step(valid, h):
    """Largest step length in (0, h] for which ``valid`` holds."""
    lo, hi = 0.0, h
    while hi - lo > BISECT_RTOL * max(h, 1e-300) and hi - lo > 0:
        mid = 0.5 * (lo + hi)
        if mid == lo or mid == hi:
            break
        if valid(mid):
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def compute_T1(s: InitialDataSummary, env: Envelope) -> float:
    """First time the envelope angle Theta reaches pi/2 (inf if beyond t_max)."""
    if s.f_sup == 0.0 and s.n_sup == 0.0:
        return math.inf
    return env.T0


def compute_T2(s: InitialDataSummary, env: Envelope) -> float:
    """First root of Theta(t) - arctan(1/P(t)); inf if none before t_max.

    The left term increases and the right term decreases, so the root is
    unique.
    """
    g0 = s.theta0 - math.atan2(1.0, s.P0)
    if g0 > 0:
        raise AssumptionError(
            "fields too large for the initial support: separation fails at t = 0",
            a3_margin=-g0)
    if g0 == 0:
        return 0.0

    def g(P, Th):
        return Th - math.atan2(1.0, P)

    vals = env.Theta - np.arctan2(1.0, env.P)
    idx = np.flatnonzero(vals >= 0)
    if idx.size and idx[0] >= env.n_fixed:
        # crossing inside the Theta-parameterized tail
        i = int(idx[0])

        def gth(th):
            return th - math.atan2(1.0, float(env.tail(th)[1]))

        th = brentq(gth, env.Theta[i - 1], env.Theta[i], xtol=1e-15, rtol=1e-15)
        return float(env.tail(th)[0])
    if idx.size:
        i = int(idx[0])
        t_lo, P, Th = env.t[i - 1], env.P[i - 1], env.Theta[i - 1]
        h = env.t[i] - t_lo

        def below(hh):
            nxt = _rk4(s, P, Th, hh)
            return nxt is not None and g(*nxt) < 0

        return float(t_lo + _bisect_step(below, h))
    if math.isfinite(env.T0):
        # Theta -> pi/2 while arctan(1/P) < pi/2: the crossing lies in the
        # closed-form remainder after the last sample, shorter than 1e-13 / k
        return env.T0
    return math.inf


def compute_t_star(theta_sup_sum: float, k_tilde, t_max: float = DEFAULT_T_MAX,
                   breakpoints=None) -> float:
    """sup{t : theta_sup_sum + int_0^t k_tilde < pi/2}.

    ``k_tilde`` is a nonnegative constant or a nondecreasing callable.  For a
    callable the integral is accumulated with 8-point Gauss-Legendre rules on
    the intervals between ``breakpoints`` (a uniform partition of [0, t_max]
    if omitted), then the crossing is found by Brent's method.
    """
    if not theta_sup_sum < HALF_PI:
        raise ValueError("theta_sup_sum must be below pi/2")
    gap = HALF_PI - theta_sup_sum
    if not callable(k_tilde):
        c = float(k_tilde)
        if c <= 0:
            return math.inf
        t = gap / c
        return t if t <= t_max else math.inf

    if breakpoints is None:
        breakpoints = np.linspace(0.0, t_max, 4097)
    bp = np.asarray(breakpoints, dtype=float)
    bp = bp[bp <= t_max]
    nodes, weights = np.polynomial.legendre.leggauss(8)

    def integral(a, b):
        mid, half = 0.5 * (a + b), 0.5 * (b - a)
        return half * float(np.dot(weights, k_tilde(mid + half * nodes)))

    acc = 0.0
    for a, b in zip(bp[:-1], bp[1:]):
        piece = integral(a, b)
        if acc + piece >= gap:
            target = gap - acc
            return float(brentq(lambda t: integral(a, t) - target, a, b, xtol=1e-15, rtol=1e-15))
        acc += piece
    return math.inf


def check_separation_margin(alpha, beta, vh1_support) -> float:
    """min over the given (x, v) support pairs of min(cos a - vh1, vh1 + cos b).

    ``alpha`` and ``beta`` are broadcast against ``vh1_support``.
    """
    vh1 = np.asarray(vh1_support, dtype=float)
    if vh1.size == 0:
        return math.inf
    m = np.minimum(np.cos(alpha) - vh1, vh1 + np.cos(beta))
    return float(np.min(m))


@dataclass(frozen=True)
class AssumptionReport:
    summary: InitialDataSummary
    a1: bool
    a2: bool
    a3: bool
    a3_margin: float
    separation_margin: float
    messages: tuple

    @property
    def ok(self) -> bool:
        return self.a1 and self.a2 and self.a3

    def to_dict(self) -> dict:
        return {
            "A1": self.a1, "A2": self.a2, "A3": self.a3,
            "a3_margin": _num(self.a3_margin),
            "separation_margin": _num(self.separation_margin),
            "messages": list(self.messages),
            "summary": self.summary.to_dict(),
        }


def check_assumptions(grid, f_in, theta2, thetaB, n, P0: float | None = None,
                      edge_layers: int = 2, sup_bounds: dict | None = None) -> AssumptionReport:
    """Evaluate the smallness and support assumptions on gridded initial data.

    ``P0`` is the momentum-support radius; if omitted it is the largest |v|
    over nodes where f > 0.  ``sup_bounds`` may raise any of the sup norms
    ``f_sup``, ``theta2_sup``, ``thetaB_sup``, ``n_sup`` above their grid
    maxima (profiles peak between nodes).
    """
    from .kinetic import DistributionGrid, boundary_mass, support_radius, vhat

    f_in = np.asarray(f_in, dtype=float)
    theta2 = np.asarray(theta2, dtype=float)
    thetaB = np.asarray(thetaB, dtype=float)
    n = np.asarray(n, dtype=float)
    msgs = []

    fg = DistributionGrid(grid, f_in)
    finite = all(np.all(np.isfinite(a)) for a in (f_in, theta2, thetaB, n))
    a1 = finite
    if not finite:
        msgs.append("A1: initial data contain non-finite values")
    if finite and np.min(f_in) < 0:
        a1 = False
        msgs.append("A1: f^in takes negative values")
    if finite and f_in.size and boundary_mass(f_in, edge_layers) > 0:
        a1 = False
        msgs.append("A1: support of f^in touches the phase-space boundary")
    for name, arr in (("theta2", theta2), ("thetaB", thetaB), ("n", n)):
        if finite and (np.any(arr[:edge_layers] != 0) or np.any(arr[-edge_layers:] != 0)):
            a1 = False
            msgs.append(f"A1: support of {name} touches the x-boundary")

    measured_P = support_radius(fg, rel_tol=0.0, f_ref=1.0) if finite else math.inf
    if P0 is None:
        P0 = measured_P
    elif measured_P > P0 * (1 + 1e-12):
        a1 = False
        msgs.append(f"A1: f^in support radius {measured_P:.6g} exceeds P0 = {P0:.6g}")

    summary = InitialDataSummary(
        theta2_sup=float(np.max(np.abs(theta2))) if finite else math.inf,
        thetaB_sup=float(np.max(np.abs(thetaB))) if finite else math.inf,
        f_sup=max(fg.sup(), 0.0) if finite else math.inf,
        f_l1=fg.l1() if finite else math.inf,
        n_sup=float(np.max(np.abs(n))) if finite else math.inf,
        n_l1=float(np.sum(grid.x_weights * np.abs(n))) if finite else math.inf,
        P0=float(P0),
    ) if finite else None
    if summary is None:
        raise AssumptionError("initial data contain non-finite values")
    if sup_bounds:
        raised = {k: max(getattr(summary, k), float(v)) for k, v in sup_bounds.items()}
        summary = replace(summary, **raised)

    a2 = bool(np.max(np.abs(theta2) + np.abs(thetaB)) < HALF_PI)
    if not a2:
        msgs.append("A2: |theta2| + |thetaB| reaches pi/2")
    a3 = summary.a3
    if not a3:
        msgs.append(
            f"A3: |theta2|_inf + |thetaB|_inf = {summary.theta0:.6g} is not below "
            f"arctan(1/P0) = {math.atan2(1.0, summary.P0):.6g}")

    ix, i1, i2 = np.nonzero(f_in > 0)
    if ix.size:
        vh1 = vhat(grid.v1[i1], grid.v2[i2])[0]
        sep = check_separation_margin((theta2 - thetaB)[ix], (theta2 + thetaB)[ix], vh1)
    else:
        sep = math.inf
    return AssumptionReport(summary, bool(a1), a2, bool(a3), summary.a3_margin, sep, tuple(msgs))


@dataclass
class HorizonReport:
    summary: InitialDataSummary
    envelope: Envelope
    t_star: float
    T0: float
    T1: float
    T2: float
    safety: float

    @property
    def certified_interval_end(self) -> float:
        """Smallest horizon shrunk by the relative safety margin."""
        return (1.0 - self.safety) * min(self.t_star, self.T0, self.T1, self.T2)

    def to_dict(self, samples: int = 65) -> dict:
        env = self.envelope
        t_end = env.t[-1]
        ts = np.linspace(0.0, t_end, samples) if t_end > 0 else np.zeros(1)
        return {
            "t_star": _num(self.t_star),
            "T0": _num(self.T0),
            "T1": _num(self.T1),
            "T2": _num(self.T2),
            "certified_interval_end": _num(self.certified_interval_end),
            "safety_fraction": self.safety,
            "t_max": env.t_max,
            "envelope": {
                "t": [float(v) for v in ts],
                "P": [float(v) for v in np.atleast_1d(env.P_at(ts))],
                "Theta": [float(v) for v in np.atleast_1d(env.Theta_at(ts))],
            },
            "summary": self.summary.to_dict(),
        }


def compute_horizons(s: InitialDataSummary, t_max: float = DEFAULT_T_MAX,
                     dt: float = DEFAULT_ENVELOPE_DT, safety: float = DEFAULT_SAFETY,
                     allow_a3_violation: bool = False) -> HorizonReport:
    """Envelope plus all horizons; A3 failure raises unless allowed (then T2 = 0)."""
    env = solve_envelope(s, t_max, dt)
    T1 = compute_T1(s, env)
    try:
        T2 = compute_T2(s, env)
    except AssumptionError:
        if not allow_a3_violation:
            raise
        T2 = 0.0
    if s.f_sup == 0.0:
        t_star = compute_t_star(s.theta0, s.n_sup, t_max)
    else:
        t_star = compute_t_star(s.theta0, env.k_tilde, env.t[-1], breakpoints=env.t)
        if not math.isfinite(t_star) and math.isfinite(env.T0):
            t_star = env.T0
    return HorizonReport(s, env, t_star, env.T0, T1, T2, safety)


def _num(v):
    v = float(v)
    return v if math.isfinite(v) else EXCEEDS
