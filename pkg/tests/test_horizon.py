from __future__ import annotations

import math

import numpy as np
import pytest
from scipy.integrate import solve_ivp
from scipy.optimize import brentq

from bivlasov.errors import AssumptionError
from bivlasov.field_transform import HALF_PI
from bivlasov.horizon import (
    EXCEEDS,
    InitialDataSummary,
    check_assumptions,
    check_separation_margin,
    compute_horizons,
    compute_t_star,
    compute_T1,
    compute_T2,
    solve_envelope,
)
from bivlasov.kinetic import PhaseSpaceGrid

GENERIC = InitialDataSummary(0.1, 0.15, 0.05, 0.02, 1.0, 0.6, 0.5)


def summary(theta2=0.0, thetaB=0.0, f_sup=0.0, f_l1=0.0, n_sup=0.0, n_l1=0.0, P0=0.0):
    return InitialDataSummary(theta2, thetaB, f_sup, f_l1, n_sup, n_l1, P0)


def oracle_T1(s: InitialDataSummary) -> float:
    """Blow-up time with P as independent variable.

    dTheta/dP = Theta' cos(Theta) / c and dt/dP = cos(Theta) / c are smooth;
    Theta approaches pi/2 as P grows.
    """
    c = s.speed_factor
    gap = 1e-12

    def rhs(P, y):
        k = s.n_sup + 3 * math.pi * s.f_sup * P * P
        return [math.cos(y[1]) / c, k * math.cos(y[1]) / c]

    def event(P, y):
        return y[1] - (HALF_PI - gap)

    event.terminal = True
    sol = solve_ivp(rhs, (s.P0, s.P0 + 1e6), [0.0, s.theta0], method="DOP853", rtol=1e-13,
                    atol=1e-15, events=event)
    P_end = sol.t_events[0][0]
    t_end = sol.y_events[0][0][0]
    return t_end + gap / (s.n_sup + 3 * math.pi * s.f_sup * P_end ** 2)


def oracle_T2(s: InitialDataSummary, t_end: float) -> float:
    """Separation time from a terminal event on the t-parameterized system."""
    c = s.speed_factor

    def rhs(t, y):
        return [c / math.cos(y[1]), s.n_sup + 3 * math.pi * s.f_sup * y[0] ** 2]

    def event(t, y):
        return y[1] - math.atan2(1, y[0])

    event.terminal = True
    sol = solve_ivp(rhs, (0, t_end), [s.P0, s.theta0], method="DOP853", rtol=1e-13,
                    atol=1e-14, events=event)
    return float(sol.t_events[0][0])


# ------------------------------------------------------------ summary

def test_summary_validation_and_margins():
    with pytest.raises(ValueError):
        summary(f_sup=-1.0)
    with pytest.raises(ValueError):
        summary(P0=math.nan)
    s = summary(theta2=0.3, thetaB=0.2, P0=1.0)
    assert s.theta0 == pytest.approx(0.5)
    assert s.a3_margin == pytest.approx(math.pi / 4 - 0.5)
    assert s.a2 and s.a3
    assert summary(f_l1=0.3, n_l1=0.1).speed_factor == pytest.approx(2 * math.sqrt(1.16))


# ------------------------------------------------------------- envelope

def test_envelope_no_sources_closed_form():
    s = summary(theta2=0.5, P0=1.0)
    env = solve_envelope(s, t_max=1.0)
    assert env.P_at(1.0) == pytest.approx(1 + 2 / math.cos(0.5), rel=1e-12)
    assert env.Theta_at(0.7) == pytest.approx(0.5, abs=1e-15)
    assert compute_T1(s, env) == math.inf


def test_envelope_theta_linear_without_f():
    s = summary(theta2=0.5, n_sup=0.1, P0=1.0)
    env = solve_envelope(s, t_max=5.0)
    t = np.array([0.0, 1.3, 4.9])
    np.testing.assert_allclose(env.Theta_at(t), 0.5 + 0.1 * t, atol=1e-13)
    # P(t) = P0 + (c/n) [ln(sec + tan)] from Theta0 to Theta(t)
    lsec = lambda th: np.log(1 / np.cos(th) + np.tan(th))  # noqa: E731
    np.testing.assert_allclose(env.P_at(t), 1 + 20 * (lsec(0.5 + 0.1 * t) - lsec(0.5)),
                               rtol=1e-11)


def test_T1_linear_closed_form():
    s = summary(theta2=0.5, n_sup=0.1, P0=0.1)
    h = compute_horizons(s, allow_a3_violation=True)
    assert h.T1 == pytest.approx((HALF_PI - 0.5) / 0.1, rel=1e-8)
    assert h.T0 == h.T1


def test_T1_generic_matches_oracle():
    env = solve_envelope(GENERIC)
    assert compute_T1(GENERIC, env) == pytest.approx(oracle_T1(GENERIC), rel=1e-8)


@pytest.mark.parametrize("s", [
    InitialDataSummary(0.0, 0.0, 0.2, 0.1, 0.0, 0.0, 0.3),
    InitialDataSummary(0.3, 0.1, 0.01, 0.05, 0.4, 0.2, 0.9),
    InitialDataSummary(0.05, 0.05, 1.0, 1.0, 0.0, 0.0, 1.0),
])
def test_T1_T2_other_data_match_oracles(s):
    h = compute_horizons(s)
    assert h.T1 == pytest.approx(oracle_T1(s), rel=1e-8)
    assert h.T2 == pytest.approx(oracle_T2(s, h.T1), rel=1e-8)


def test_T2_generic_matches_oracle():
    env = solve_envelope(GENERIC)
    T1 = compute_T1(GENERIC, env)
    assert compute_T2(GENERIC, env) == pytest.approx(oracle_T2(GENERIC, T1), rel=1e-8)


def test_T2_closed_form_without_sources():
    # Theta constant, P linear: Theta0 = arctan(1/P) at P = 1/tan(Theta0)
    th0, P0 = 0.4, 0.8
    s = summary(theta2=th0, P0=P0)
    expected = (1 / math.tan(th0) - P0) / (2 / math.cos(th0))
    env = solve_envelope(s, t_max=10.0)
    assert compute_T2(s, env) == pytest.approx(expected, rel=1e-10)


def test_T2_crossing_close_to_blowup():
    # fast angle growth: the crossing sits where Theta is within ~1e-2 of pi/2
    n = 1000.0
    s = summary(n_sup=n)
    lsec = lambda th: math.log(1 / math.cos(th) + math.tan(th))  # noqa: E731
    th = brentq(lambda a: a - math.atan2(1, 2 / n * lsec(a)), 0.5, HALF_PI - 1e-12, xtol=1e-15)
    h = compute_horizons(s)
    assert HALF_PI - th < 0.05
    assert h.T2 == pytest.approx(th / n, rel=1e-10)
    assert h.T1 == pytest.approx(HALF_PI / n, rel=1e-10)


def test_T2_zero_at_equality_and_error_beyond():
    P0 = 1.0
    s = summary(theta2=math.atan2(1, P0), P0=P0)
    env = solve_envelope(s, t_max=1.0)
    assert compute_T2(s, env) == 0.0
    bad = summary(theta2=0.8, P0=1.0)
    with pytest.raises(AssumptionError):
        compute_T2(bad, solve_envelope(bad, t_max=1.0))
    assert compute_horizons(bad, t_max=1.0, allow_a3_violation=True).T2 == 0.0
    with pytest.raises(AssumptionError):
        compute_horizons(bad, t_max=1.0)


def test_horizons_decrease_with_data():
    base = dict(theta2=0.1, thetaB=0.1, f_sup=0.05, f_l1=0.05, n_sup=0.2, n_l1=0.1, P0=0.5)
    ref = compute_horizons(summary(**base))
    for key, bump_by in (("f_sup", 0.05), ("n_sup", 0.1), ("P0", 0.2), ("theta2", 0.1)):
        h = compute_horizons(summary(**{**base, key: base[key] + bump_by}))
        assert h.T1 < ref.T1, key
        assert h.T2 < ref.T2, key
    assert ref.T2 < ref.T1


# --------------------------------------------------------------- t_star

def test_t_star_constant_rate():
    assert compute_t_star(0.3, 0.0) == math.inf
    assert compute_t_star(0.3, 0.5) == pytest.approx((HALF_PI - 0.3) / 0.5)
    assert compute_t_star(0.3, 1e-6, t_max=10.0) == math.inf
    with pytest.raises(ValueError):
        compute_t_star(HALF_PI, 1.0)


def test_t_star_callable_rate():
    # int_0^t 2s ds = t^2
    t = compute_t_star(0.5, lambda s: 2 * s, t_max=5.0)
    assert t == pytest.approx(math.sqrt(HALF_PI - 0.5), rel=1e-12)


def test_t_star_envelope_consistent_with_theta():
    env = solve_envelope(GENERIC)
    delta = 1e-3
    t = compute_t_star(GENERIC.theta0 + delta, env.k_tilde, env.t[-1], breakpoints=env.t)
    expected = brentq(lambda s: env.Theta_at(s) - (HALF_PI - delta), 0.0, env.t[-1], xtol=1e-15)
    assert t == pytest.approx(expected, rel=1e-10)


def test_t_star_equals_T1_in_report():
    h = compute_horizons(GENERIC)
    assert h.t_star == pytest.approx(h.T1, rel=1e-10)
    assert h.certified_interval_end == pytest.approx(0.99 * min(h.T1, h.T2))


def test_report_serializes_infinite_horizons():
    d = compute_horizons(summary(theta2=0.3, P0=0.5), t_max=2.0).to_dict()
    assert d["T1"] == EXCEEDS and d["t_star"] == EXCEEDS
    assert isinstance(d["T2"], float)
    assert len(d["envelope"]["t"]) == 65


# ----------------------------------------------------------- assumptions

def _point_data(theta_sum=0.0):
    grid = PhaseSpaceGrid(-1.0, 1.0, 21, 4.5, 9, 9)
    f = np.zeros(grid.shape)
    f[10, 5, 4] = 1.0  # x = 0, v = (1, 0)
    th2 = np.zeros(grid.nx)
    th2[8:13] = theta_sum
    z = np.zeros(grid.nx)
    return grid, f, th2, z, z


def test_assumptions_pass_with_zero_fields():
    grid, f, th2, thB, n = _point_data()
    rep = check_assumptions(grid, f, th2, thB, n, P0=1.0)
    assert rep.ok and rep.a1 and rep.a2 and rep.a3
    assert rep.a3_margin == pytest.approx(math.pi / 4)
    assert rep.separation_margin == pytest.approx(1 - 1 / math.sqrt(2))
    assert rep.summary.P0 == 1.0 and rep.summary.f_sup == 1.0


def test_assumptions_fail_on_large_angle():
    grid, f, th2, thB, n = _point_data(0.8)
    rep = check_assumptions(grid, f, th2, thB, n, P0=1.0)
    assert rep.a1 and rep.a2 and not rep.a3 and not rep.ok
    assert any(m.startswith("A3") for m in rep.messages)


def test_assumptions_detect_a1_violations():
    grid, f, th2, thB, n = _point_data()
    neg = f.copy()
    neg[5, 4, 4] = -1e-3
    assert not check_assumptions(grid, neg, th2, thB, n).a1
    edge = f.copy()
    edge[0, 4, 4] = 1.0
    assert not check_assumptions(grid, edge, th2, thB, n).a1
    assert not check_assumptions(grid, f, th2, thB, n, P0=0.5).a1
    with pytest.raises(AssumptionError):
        check_assumptions(grid, f * math.nan, th2, thB, n)


def test_measured_support_radius_default():
    grid, f, th2, thB, n = _point_data()
    assert check_assumptions(grid, f, th2, thB, n).summary.P0 == pytest.approx(1.0)


def test_separation_margin_zero_at_a3_boundary():
    # |alpha| = arctan(1/P) makes a wave exactly as fast as a particle of momentum P
    P = 0.7
    vh1 = P / math.sqrt(1 + P * P)
    th = math.atan2(1, P)
    for th2 in (0.0, 0.3 * th, th):
        thB = th2 - th
        assert abs(check_separation_margin(th2 - thB, th2 + thB, vh1)) <= 1e-15
        # mirrored: beta = -arctan(1/P) against a particle moving left
        assert abs(check_separation_margin(-th2 - thB, -(th2 - thB), -vh1)) <= 1e-15
    assert check_separation_margin(0.0, 0.0, []) == math.inf


def test_separation_margin_brute_force():
    rng = np.random.default_rng(0)
    a, b = rng.uniform(-1.2, 1.2, (2, 200))
    vh = rng.uniform(-0.9, 0.9, 200)
    brute = min(min(math.cos(ai) - v, v + math.cos(bi)) for ai, bi, v in zip(a, b, vh))
    assert check_separation_margin(a, b, vh) == pytest.approx(brute, abs=1e-15)
