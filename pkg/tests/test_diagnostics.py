from __future__ import annotations

import math
from dataclasses import replace
from types import SimpleNamespace

import numpy as np
import pytest

from bivlasov.config import bump
from bivlasov.coupling import StepParams, initial_state
from bivlasov.diagnostics import (
    BoundTolerances,
    DiagnosticFrame,
    bound_check_frame,
    envelope_values,
    gradient_quantities,
    support_growth_check,
)
from bivlasov.field_solver import InvariantGrid
from bivlasov.field_transform import HALF_PI
from bivlasov.horizon import InitialDataSummary, solve_envelope
from bivlasov.kinetic import DistributionGrid, PhaseSpaceGrid

GRID = PhaseSpaceGrid(-2.0, 2.0, 41, 2.0, 40, 40)


def state_for(f_values, theta2=None, thetaB=None, n=None):
    x = GRID.x
    z = np.zeros(GRID.nx)
    inv = InvariantGrid.from_angles(x, z if theta2 is None else theta2,
                                    z if thetaB is None else thetaB)
    return initial_state(DistributionGrid(GRID, f_values), inv, z if n is None else n,
                         StepParams(dt=0.05))


def disk(radius=1.0, amplitude=1.0):
    X, V1, V2 = GRID.mesh()
    inside = (np.hypot(V1, V2) < radius) & (np.abs(X) < 0.5)
    return np.where(inside, amplitude, 0.0)


# ---------------------------------------------------------------- frames

def test_vacuum_frame_all_bounds_hold():
    s = InitialDataSummary(0, 0, 0, 0, 0, 0, 0)
    st = state_for(np.zeros(GRID.shape))
    fr = bound_check_frame(st, s, solve_envelope(s, t_max=1.0))
    assert fr.all_bounds_hold
    assert fr.f_max == 0 and fr.rho_sup == 0 and fr.b_sup == 0 and fr.P_measured == 0
    assert fr.Theta_envelope == 0 and fr.P_envelope == 0
    assert fr.certified


def test_charge_density_bound_is_pi_f_P_squared():
    # the density flag compares rho with pi |f|_inf P^2; the cell-centred unit
    # disk has discrete area 3.16, just above pi, which pins the threshold
    st = state_for(disk())
    assert st.moments.rho.max() == pytest.approx(3.16)
    for P0, ok in ((1.0, False), (1.01, True)):
        s = InitialDataSummary(0, 0, 1.0, 0.5, 0, 0, P0)
        fr = bound_check_frame(st, s, solve_envelope(s, t_max=0.1))
        assert fr.ok_rho is ok


def test_smooth_profile_density_flags():
    X, V1, V2 = GRID.mesh()
    f = bump(X / 0.5) * bump(np.hypot(V1, V2))
    st = state_for(f)
    s = InitialDataSummary(0, 0, 1.0, st.f.l1(), 0, 0, 1.0)
    fr = bound_check_frame(st, s, solve_envelope(s, t_max=0.1))
    # int (1 - |v|^2)^2 dv = pi / 3
    assert fr.rho_sup == pytest.approx(math.pi / 3, rel=1e-3)
    assert fr.ok_rho and fr.ok_j and fr.ok_f and fr.all_bounds_hold
    # understating the sup norm trips the density and overshoot flags
    weak = InitialDataSummary(0, 0, 0.3, st.f.l1(), 0, 0, 1.0)
    fr2 = bound_check_frame(st, weak, solve_envelope(weak, t_max=0.1))
    assert not fr2.ok_rho and not fr2.ok_f and not fr2.all_bounds_hold


def test_angle_flag_and_field_bounds():
    x = GRID.x
    th2 = 0.3 * np.exp(-x * x) * (np.abs(x) < 1.5)
    s = InitialDataSummary(0.3, 0.0, 0, 0, 0, 0, 0)
    env = solve_envelope(s, t_max=1.0)
    fr = bound_check_frame(state_for(np.zeros(GRID.shape), theta2=th2), s, env)
    assert fr.ok_angle_sum and fr.ok_d2 and fr.ok_b
    assert fr.angle_sum_max == pytest.approx(0.3)
    assert fr.d2_sup == pytest.approx(math.tan(0.3))
    low = InitialDataSummary(0.2, 0.0, 0, 0, 0, 0, 0)
    bad = bound_check_frame(state_for(np.zeros(GRID.shape), theta2=th2), low,
                            solve_envelope(low, t_max=1.0))
    assert not bad.ok_angle_sum and not bad.ok_d2


def test_certified_flag_and_envelope_slack():
    s = InitialDataSummary(0, 0, 1.0, 0.5, 0, 0, 1.0)
    st = state_for(disk())
    env = solve_envelope(s, t_max=1.0)
    fr = bound_check_frame(replace(st, t=0.5), s, env, certified_end=0.4)
    assert not fr.certified
    # measured radius above the envelope plus slack
    s_small = InitialDataSummary(0, 0, 1.0, 0.5, 0, 0, 0.5)
    fr = bound_check_frame(st, s_small, solve_envelope(s_small, t_max=1.0),
                           BoundTolerances(envelope_slack=1e-3))
    assert fr.P_measured > 0.9 and not fr.ok_envelope


def test_row_and_columns():
    s = InitialDataSummary(0, 0, 0, 0, 0, 0, 0)
    fr = bound_check_frame(state_for(np.zeros(GRID.shape)), s, solve_envelope(s, t_max=1.0))
    row = fr.row()
    assert list(row) == DiagnosticFrame.columns()
    assert set(fr.bound_flags) == {c for c in row if c.startswith("ok_")}
    assert len(fr.bound_flags) == 13


def test_envelope_values_past_range():
    s = InitialDataSummary(0.5, 0, 0, 0, 1.0, 0, 0.1)
    env = solve_envelope(s, t_max=10.0)
    assert envelope_values(env, 100.0) == (math.inf, HALF_PI)
    P, Th = envelope_values(env, 0.5)
    assert Th == pytest.approx(1.0, abs=1e-12) and P > 0.1


# ------------------------------------------------------------- gradients

def test_gradient_quantities_match_analytic():
    errs = []
    for nx in (101, 201):
        x = np.linspace(-2, 2, nx)
        a, b = 0.3 * np.sin(x), 0.2 * np.cos(2 * x)
        inv = InvariantGrid(x, a, b)
        g = gradient_quantities(inv)
        s = np.cos(a) + np.cos(b)
        u = -s * 0.3 * np.cos(x)
        w = s * (-0.4 * np.sin(2 * x))
        errs.append(max(np.max(np.abs(g.u - u)), np.max(np.abs(g.w - w))))
        assert g.u_max == pytest.approx(np.max(np.abs(g.u)))
    assert errs[1] < 1e-3
    assert errs[0] / errs[1] > 3.5


# -------------------------------------------------------- support growth

def frames(P, g, dt=0.1):
    return [SimpleNamespace(t=i * dt, P_measured=p, d_sup=gi, b_sup=0.0)
            for i, (p, gi) in enumerate(zip(P, g))]


def test_support_growth_within_integral():
    # constant |D| = 1 allows growth at unit rate
    assert support_growth_check(frames([1.0, 1.1, 1.2, 1.3], [1.0] * 4))
    assert support_growth_check(frames([1.0, 1.0, 1.0], [0.0] * 3))


def test_support_growth_violation():
    assert not support_growth_check(frames([1.0, 1.1, 1.25], [1.0] * 3))
    assert not support_growth_check(frames([1.0, 1.0], [0.0, 0.0]), P0=0.9)
    with pytest.raises(ValueError):
        support_growth_check(frames([1.0], [0.0]))
