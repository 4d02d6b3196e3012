"""Coupled time stepping, Picard iteration and runtime safety checks.

A direct step is a predictor-corrector splitting, field first:

1. sources from the moments at t;
2. predictor field step with the sources at t on both time levels, and
   D1 predicted from d_t D1 = -j1;
3. kinetic step through fields varying linearly in time between t and the
   predicted t + dt;
4. moments at t + dt;
5. corrector field step with the sources at t and t + dt (trapezoid rule);
6. angle guard and separation check.

The Picard mode instead freezes whole time histories of the fields and of the
sources, alternating between the linear Vlasov problem and the field system.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field, replace

import numpy as np

from .config import SimConfig, build_initial_data, support_x_radius
from .diagnostics import BoundTolerances, bound_check_frame
from .errors import (
    AssumptionError,
    ConfigError,
    PicardNonConvergenceError,
    SeparationViolationError,
    SolverError,
)
from .field_solver import InvariantGrid, field_step
from .field_transform import RawFields, SourceCoefficients, from_theta, sources
from .horizon import AssumptionReport, HorizonReport, check_assumptions, compute_horizons
from .kinetic import (
    DistributionGrid,
    Moments,
    compute_moments,
    continuity_residual,
    semi_lagrangian_step,
    support_radius,
    trace_characteristics_forward,
    vhat,
)

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class Markers:
    """Characteristics launched from the initial support, traced forward.

    Their largest |V| is the measured momentum-support radius.
    """

    x: np.ndarray
    v1: np.ndarray
    v2: np.ndarray

    @classmethod
    def from_support(cls, f: DistributionGrid) -> "Markers":
        g = f.grid
        ix, i1, i2 = np.nonzero(f.values > 0)
        return cls(g.x[ix], g.v1[i1], g.v2[i2])

    def radius(self) -> float:
        if self.x.size == 0:
            return 0.0
        return float(np.max(np.hypot(self.v1, self.v2)))

    def advance(self, dt, fields_old, fields_new, x_nodes, order):
        if self.x.size == 0:
            return self
        return Markers(*trace_characteristics_forward(
            self.x, self.v1, self.v2, dt, fields_old, fields_new, x_nodes, order))


@dataclass(frozen=True)
class StepParams:
    dt: float
    order: int = 3
    kind: str = "spline"
    clip: bool = False
    field_iterations: int = 2
    eps_guard: float = 1e-3
    separation_floor: float = 1e-6
    support_threshold: float = 0.0
    boundary_tol: float | None = None
    field_boundary_tol: float | None = 1e-6

    @classmethod
    def from_config(cls, cfg: SimConfig, dt: float, f_sup: float) -> "StepParams":
        tol = cfg.tolerances
        ref = f_sup if f_sup > 0 else 1.0
        return cls(
            dt=dt,
            order=cfg.solver.interp_order,
            kind=cfg.solver.kinetic_interp,
            clip=cfg.solver.clip,
            field_iterations=cfg.solver.field_iterations,
            eps_guard=tol.eps_guard,
            separation_floor=tol.separation_floor,
            support_threshold=tol.support_rel_tol * ref,
            boundary_tol=tol.boundary_tol_rel * ref,
            field_boundary_tol=tol.field_boundary_tol,
        )


@dataclass(frozen=True)
class SeparationReport:
    margin: float
    x: float | None = None
    v1: float | None = None
    v2: float | None = None
    upper: float = math.inf
    lower: float = math.inf


@dataclass(frozen=True)
class SimState:
    t: float
    step: int
    f: DistributionGrid
    inv: InvariantGrid
    fields: RawFields
    moments: Moments
    sources: SourceCoefficients
    markers: Markers
    growth_integral: float
    d1_evolved: np.ndarray
    continuity_residual: float = 0.0
    separation_margin: float = math.inf
    grid_support_radius: float = 0.0


@dataclass
class PicardTrace:
    iterations: list = field(default_factory=list)
    f_delta: list = field(default_factory=list)
    field_delta: list = field(default_factory=list)
    f_delta_integral: list = field(default_factory=list)
    converged: bool = False

    def ratios(self, which: str = "f_delta") -> list[float]:
        d = getattr(self, which)
        return [d[i + 1] / d[i] if d[i] > 0 else 0.0 for i in range(len(d) - 1)]

    def to_dict(self) -> dict:
        return {
            "iterations": list(self.iterations),
            "f_delta": [float(v) for v in self.f_delta],
            "field_delta": [float(v) for v in self.field_delta],
            "f_delta_integral": [float(v) for v in self.f_delta_integral],
            "converged": self.converged,
        }


# ------------------------------------------------------------ primitives

def fields_from(inv: InvariantGrid, d1) -> RawFields:
    d2, b = from_theta(inv.theta2, inv.thetaB, d1)
    return RawFields(np.asarray(d1, dtype=float), np.asarray(d2), np.asarray(b))


def check_separation(state: SimState, threshold: float = 0.0) -> SeparationReport:
    """Smallest separation margin min(cos a - vh1, vh1 + cos b) over the support.

    The support is the set of nodes where f exceeds ``threshold``.
    """
    g = state.f.grid
    ix, i1, i2 = np.nonzero(state.f.values > threshold)
    if ix.size == 0:
        return SeparationReport(math.inf)
    vh1 = vhat(g.v1[i1], g.v2[i2])[0]
    upper = np.cos(state.inv.alpha[ix]) - vh1
    lower = vh1 + np.cos(state.inv.beta[ix])
    margins = np.minimum(upper, lower)
    i = int(np.argmin(margins))
    return SeparationReport(float(margins[i]), float(g.x[ix[i]]), float(g.v1[i1[i]]),
                            float(g.v2[i2[i]]), float(upper[i]), float(lower[i]))


def _norm_sum(fl: RawFields) -> float:
    return float(np.max(np.hypot(fl.d1, fl.d2)) + np.max(np.abs(fl.b)))


def initial_state(f: DistributionGrid, inv: InvariantGrid, n: np.ndarray,
                  params: StepParams) -> SimState:
    m = compute_moments(f, n)
    fl = fields_from(inv, m.d1)
    state = SimState(
        t=0.0, step=0, f=f, inv=inv, fields=fl, moments=m,
        sources=sources(m.rho, m.j1, m.j2, m.d1),
        markers=Markers.from_support(f),
        growth_integral=0.0,
        d1_evolved=m.d1.copy(),
    )
    return _finish(state, params)


def _finish(state: SimState, params: StepParams) -> SimState:
    """Attach the support measures and enforce the separation condition."""
    sep = check_separation(state, params.support_threshold)
    radius = support_radius(state.f, rel_tol=1.0, f_ref=params.support_threshold) \
        if params.support_threshold > 0 else support_radius(state.f, rel_tol=0.0, f_ref=1.0)
    state = replace(state, separation_margin=sep.margin, grid_support_radius=radius)
    if sep.margin < params.separation_floor:
        raise SeparationViolationError(
            f"particle velocity met a field characteristic speed (margin {sep.margin:.3e})",
            t=state.t, x=sep.x, v1=sep.v1, v2=sep.v2, margin=sep.margin,
            upper_margin=sep.upper, lower_margin=sep.lower)
    return state


def advance_state(prev: SimState, f: DistributionGrid, inv: InvariantGrid, m: Moments,
                  k: SourceCoefficients, params: StepParams) -> SimState:
    """Assemble the state at t + dt from its solved parts plus running diagnostics."""
    dt = params.dt
    fl = fields_from(inv, m.d1)
    x = inv.x
    markers = prev.markers.advance(dt, prev.fields, fl, x, params.order)
    residual, _ = continuity_residual(prev.moments, m, dt, float(x[1] - x[0]))
    state = SimState(
        t=prev.t + dt,
        step=prev.step + 1,
        f=f, inv=inv, fields=fl, moments=m, sources=k,
        markers=markers,
        growth_integral=prev.growth_integral + 0.5 * dt * (_norm_sum(prev.fields) + _norm_sum(fl)),
        d1_evolved=prev.d1_evolved - 0.5 * dt * (prev.moments.j1 + m.j1),
        continuity_residual=residual,
    )
    return _finish(state, params)


def step_coupled(state: SimState, params: StepParams, n: np.ndarray) -> SimState:
    """One predictor-corrector step of the coupled system (field first)."""
    dt = params.dt
    m0, k0 = state.moments, state.sources
    kw = dict(order=params.order, n_iter=params.field_iterations, eps_guard=params.eps_guard,
              boundary_tol=params.field_boundary_tol)

    inv_pred = field_step(state.inv, k0, k0, dt, **kw)
    fields_pred = fields_from(inv_pred, m0.d1 - dt * m0.j1)
    f_new = semi_lagrangian_step(state.f, state.fields, fields_pred, dt, order=params.order,
                                 clip=params.clip, boundary_tol=params.boundary_tol,
                                 kind=params.kind)
    m_new = compute_moments(f_new, n)
    k_new = sources(m_new.rho, m_new.j1, m_new.j2, m_new.d1)
    inv_new = field_step(state.inv, k0, k_new, dt, **kw)
    return advance_state(state, f_new, inv_new, m_new, k_new, params)


# ------------------------------------------------------------------- runs

@dataclass
class Prepared:
    cfg: SimConfig
    data: object
    assumptions: AssumptionReport
    horizon: HorizonReport
    dt: float
    n_steps: int
    t_stop: float
    stop_reason: str
    uncertified: bool
    params: StepParams


def prepare(cfg: SimConfig, t_end: float | None = None) -> Prepared:
    """Initial data, assumption checks, horizons and grid sizing for a run.

    Raises :class:`AssumptionError` when A1-A3 fail without override and
    :class:`ConfigError` when the grid cannot contain the solution on the
    interval to be simulated.
    """
    data = build_initial_data(cfg)
    rep = check_assumptions(data.grid, data.f, data.theta2, data.thetaB, data.n, P0=data.P0,
                           sup_bounds=data.sup_bounds)
    if not rep.ok and not cfg.overrides.assumptions:
        raise AssumptionError("initial data fail the assumptions: " + "; ".join(rep.messages),
                              a1=rep.a1, a2=rep.a2, a3=rep.a3, a3_margin=rep.a3_margin,
                              separation_margin=rep.separation_margin)
    if not rep.a2:
        raise AssumptionError("angle sum reaches pi/2; no override can start this run",
                              a3_margin=rep.a3_margin)
    tol = cfg.tolerances
    hor = compute_horizons(rep.summary, tol.t_max, tol.envelope_dt, tol.safety_fraction,
                           allow_a3_violation=cfg.overrides.assumptions)

    t_req = cfg.time.t_end if t_end is None else t_end
    dt, nt = cfg.time_step()
    if t_end is not None:
        nt = max(1, int(math.ceil(t_end / dt - 1e-9)))
        dt = t_end / nt
    cert = hor.certified_interval_end
    stop_reason = "t_end"
    t_stop = t_req
    n_steps = nt
    if t_req > cert and not cfg.overrides.certified:
        n_steps = int(math.floor(cert / dt + 1e-9))
        t_stop = n_steps * dt
        stop_reason = "certified_interval_end"
    uncertified = (t_req > cert and cfg.overrides.certified) or not rep.ok

    if not cfg.overrides.grid_envelope:
        problems = []
        g = data.grid
        reach = support_x_radius(cfg) + t_stop + 2.0 * g.dx
        if reach > min(-g.x_min, g.x_max):
            problems.append(("grid.x_min",
                             f"x-domain must contain [-{reach:.4g}, {reach:.4g}] "
                             "(support plus light cone over the run)"))
        if rep.summary.f_sup > 0:
            env = hor.envelope
            P_need = env.P_at(t_stop) if t_stop <= env.t[-1] else math.inf
            if g.v_max < P_need:
                problems.append(("grid.v_max",
                                 f"must be at least the envelope radius P({t_stop:.4g}) = {P_need:.4g}"))
        if problems:
            raise ConfigError(problems)

    params = StepParams.from_config(cfg, dt, rep.summary.f_sup)
    return Prepared(cfg, data, rep, hor, dt, n_steps, t_stop, stop_reason, uncertified, params)


def _initial_from(prep: Prepared) -> SimState:
    d = prep.data
    inv = InvariantGrid.from_angles(d.grid.x, d.theta2, d.thetaB)
    return initial_state(DistributionGrid(d.grid, d.f), inv, d.n, prep.params)


@dataclass
class RunResult:
    prepared: Prepared
    frames: list
    snapshots: dict
    final: SimState
    abort: SolverError | None = None

    @property
    def stop_reason(self) -> str:
        return self.abort.reason if self.abort is not None else self.prepared.stop_reason


def snapshot_steps(times, dt, n_steps) -> dict:
    """Nearest step index for every requested snapshot time within the run."""
    out = {}
    for t in times:
        k = int(round(t / dt))
        if 0 <= k <= n_steps:
            out.setdefault(k, t)
    return out


def snapshot(state: SimState) -> dict:
    inv, fl = state.inv, state.fields
    return {
        "t": state.t, "x": inv.x, "theta2": inv.theta2, "thetaB": inv.thetaB,
        "alpha": inv.alpha, "beta": inv.beta, "D1": fl.d1, "D2": fl.d2, "B": fl.b,
    }


def _frame(state, prep: Prepared):
    tol = prep.cfg.tolerances
    bt = BoundTolerances(tol.f_overshoot_rel, tol.envelope_slack, tol.support_growth_tol)
    return bound_check_frame(state, prep.assumptions.summary, prep.horizon.envelope, bt,
                             prep.horizon.certified_interval_end)


def run(cfg: SimConfig, on_frame=None, prepared: Prepared | None = None) -> RunResult:
    """Direct co-stepping from t = 0 to the stop time.

    Solver aborts inside the loop are recorded on the result rather than
    raised; everything produced before the abort is kept.  ``on_frame`` is
    called with each DiagnosticFrame as soon as it is computed.
    """
    prep = prepared or prepare(cfg)
    cadence = cfg.output.cadence
    snaps_at = snapshot_steps(cfg.output.snapshot_times, prep.dt, prep.n_steps)
    frames, snaps = [], {}

    def emit(state, force=False):
        if state.step % cadence == 0 or force:
            fr = _frame(state, prep)
            frames.append(fr)
            if on_frame is not None:
                on_frame(fr)
        if state.step in snaps_at:
            snaps[state.step] = snapshot(state)

    n = prep.data.n
    abort = None
    state = None
    try:
        state = _initial_from(prep)
        emit(state)
        for _ in range(prep.n_steps):
            state = step_coupled(state, prep.params, n)
            emit(state, force=state.step == prep.n_steps)
    except SolverError as exc:
        log.warning("run aborted at t=%s: %s", None if state is None else state.t, exc)
        abort = exc
    return RunResult(prep, frames, snaps, state, abort)


# ----------------------------------------------------------------- Picard

@dataclass
class PicardResult:
    prepared: Prepared
    trace: PicardTrace
    f_history: list
    inv_history: list
    moments_history: list
    sources_history: list

    @property
    def final_inv(self) -> InvariantGrid:
        return self.inv_history[-1]


def picard_solve(cfg: SimConfig, T: float | None = None, tol: float | None = None,
                 max_iter: int | None = None, prepared: Prepared | None = None) -> PicardResult:
    """Fixed-point iteration on whole time histories over [0, T].

    Iterate n solves the linear Vlasov equation in the fields of iterate
    n - 1, takes its moments and sources, then solves the field system with
    those sources frozen.  Iterate 0 is the initial data held constant in
    time.  Deltas are sup norms over all stored time levels.
    """
    prep = prepared or prepare(cfg, t_end=T)
    tol = cfg.solver.picard_tol if tol is None else tol
    max_iter = cfg.solver.picard_max_iter if max_iter is None else max_iter
    p = prep.params
    dt, nt = prep.dt, prep.n_steps
    d = prep.data
    n_bg = d.n

    f0 = DistributionGrid(d.grid, d.f)
    inv0 = InvariantGrid.from_angles(d.grid.x, d.theta2, d.thetaB)
    m0 = compute_moments(f0, n_bg)
    k0 = sources(m0.rho, m0.j1, m0.j2, m0.d1)
    fl0 = fields_from(inv0, m0.d1)

    f_hist = [f0] * (nt + 1)
    inv_hist = [inv0] * (nt + 1)
    fl_hist = [fl0] * (nt + 1)
    m_hist = [m0] * (nt + 1)
    k_hist = [k0] * (nt + 1)
    trace = PicardTrace()
    kw = dict(order=p.order, n_iter=p.field_iterations, eps_guard=p.eps_guard,
              boundary_tol=p.field_boundary_tol)

    for it in range(1, max_iter + 1):
        new_f = [f0]
        new_m = [m0]
        f_diff = [0.0]
        for i in range(nt):
            fi = semi_lagrangian_step(new_f[-1], fl_hist[i], fl_hist[i + 1], dt, order=p.order,
                                      clip=p.clip, boundary_tol=p.boundary_tol, kind=p.kind)
            new_f.append(fi)
            new_m.append(compute_moments(fi, n_bg))
            f_diff.append(float(np.max(np.abs(fi.values - f_hist[i + 1].values))))
        new_k = [sources(m.rho, m.j1, m.j2, m.d1) for m in new_m]
        new_inv = [inv0]
        for i in range(nt):
            new_inv.append(field_step(new_inv[-1], new_k[i], new_k[i + 1], dt, **kw))
        new_fl = [fields_from(inv, m.d1) for inv, m in zip(new_inv, new_m)]

        da = max(float(np.max(np.abs(a.alpha - b.alpha))) for a, b in zip(new_inv, inv_hist))
        db = max(float(np.max(np.abs(a.beta - b.beta))) for a, b in zip(new_inv, inv_hist))
        df = max(f_diff)
        fd = np.asarray(f_diff)
        trace.iterations.append(it)
        trace.f_delta.append(df)
        trace.field_delta.append(da + db)
        trace.f_delta_integral.append(float(np.sum(0.5 * dt * (fd[1:] + fd[:-1]))))
        log.info("picard iteration %d: |df| = %.3e, |d(alpha,beta)| = %.3e", it, df, da + db)

        f_hist, inv_hist, fl_hist, m_hist, k_hist = new_f, new_inv, new_fl, new_m, new_k
        if df < tol and da + db < tol:
            trace.converged = True
            break

    result = PicardResult(prep, trace, f_hist, inv_hist, m_hist, k_hist)
    if not trace.converged:
        raise PicardNonConvergenceError(
            f"Picard iteration did not reach tolerance {tol:g} in {max_iter} iterations",
            trace=trace, last_f_delta=trace.f_delta[-1], last_field_delta=trace.field_delta[-1])
    return result


def picard_states(result: PicardResult):
    """Replay the converged histories as SimStates (with running diagnostics)."""
    prep = result.prepared
    p = prep.params
    state = initial_state(result.f_history[0], result.inv_history[0], prep.data.n, p)
    yield state
    for i in range(1, len(result.f_history)):
        state = advance_state(state, result.f_history[i], result.inv_history[i],
                              result.moments_history[i], result.sources_history[i], p)
        yield state


def run_picard(cfg: SimConfig, on_frame=None, prepared: Prepared | None = None) -> RunResult:
    """Picard mode over [0, stop time], reported in the same form as :func:`run`."""
    prep = prepared or prepare(cfg)
    snaps_at = snapshot_steps(cfg.output.snapshot_times, prep.dt, prep.n_steps)
    frames, snaps = [], {}
    state = None
    abort = None
    try:
        result = picard_solve(cfg, prepared=prep)
        for state in picard_states(result):
            last = state.step == prep.n_steps
            if state.step % cfg.output.cadence == 0 or last:
                fr = _frame(state, prep)
                frames.append(fr)
                if on_frame is not None:
                    on_frame(fr)
            if state.step in snaps_at:
                snaps[state.step] = snapshot(state)
        out = RunResult(prep, frames, snaps, state, None)
        out.picard_trace = result.trace
        return out
    except SolverError as exc:
        abort = exc
    out = RunResult(prep, frames, snaps, state, abort)
    out.picard_trace = getattr(abort, "trace", None)
    return out
