from __future__ import annotations

import math

import numpy as np
import pytest
from scipy.integrate import solve_ivp

from bivlasov.config import bump
from bivlasov.errors import BlowUpProximityError, DomainExitError
from bivlasov.field_solver import (
    FieldCharacteristic,
    InvariantGrid,
    field_step,
    source_term,
    trace_eta,
    trace_xi,
)
from bivlasov.field_transform import HALF_PI, SourceCoefficients, inhomogeneous_rhs

X = np.linspace(-2.0, 2.0, 81)


def zero_k(n):
    z = np.zeros(n)
    return SourceCoefficients(z, z, z)


def const_k(n, k0, k1, k2):
    one = np.ones(n)
    return SourceCoefficients(k0 * one, k1 * one, k2 * one)


def simple_wave_error(nx, mirror=False, T=0.5, power=3):
    x = np.linspace(-2.0, 2.0, nx)
    dx = x[1] - x[0]
    nt = int(math.ceil(T / (0.5 * dx)))
    dt = T / nt
    c = 0.5 if mirror else -0.5
    wave = 0.3 * bump((x - c) / 0.5, power)
    inv = InvariantGrid(x, wave, 0 * x) if mirror else InvariantGrid(x, 0 * x, wave)
    z = zero_k(nx)
    for _ in range(nt):
        inv = field_step(inv, z, z, dt)
    shift = -T if mirror else T
    exact = 0.3 * bump((x - shift - c) / 0.5, power)
    moving, still = (inv.alpha, inv.beta) if mirror else (inv.beta, inv.alpha)
    return float(np.max(np.abs(moving - exact))), float(np.max(np.abs(still)))


# ------------------------------------------------------------ InvariantGrid

def test_invariant_grid_angles_round_trip():
    rng = np.random.default_rng(0)
    th2, thB = rng.uniform(-0.7, 0.7, (2, 81))
    inv = InvariantGrid.from_angles(X, th2, thB)
    np.testing.assert_allclose(inv.alpha, th2 - thB)
    np.testing.assert_allclose(inv.beta, th2 + thB)
    np.testing.assert_allclose(inv.theta2, th2, atol=1e-15)
    np.testing.assert_allclose(inv.thetaB, thB, atol=1e-15)
    assert inv.dx == pytest.approx(0.05)


def test_source_term_matches_transform():
    rng = np.random.default_rng(1)
    a, b = rng.uniform(-1, 1, (2, 50))
    k = SourceCoefficients(*rng.normal(size=(3, 50)))
    np.testing.assert_allclose(source_term(a, b, k), inhomogeneous_rhs((a + b) / 2, (b - a) / 2, k))


# ----------------------------------------------------------- characteristics

def test_trace_xi_vacuum_speed():
    z = np.zeros_like(X)
    xi = trace_xi(X[10:-10], 0.02, z, z, X)
    np.testing.assert_allclose(xi, X[10:-10] + 0.02, atol=1e-15)


def test_trace_xi_near_half_pi_barely_moves():
    g = np.full_like(X, HALF_PI - 1e-9)
    xi = trace_xi(X[10:-10], 0.02, g, g, X)
    assert np.max(np.abs(xi - X[10:-10])) < 1e-10


def test_trace_eta_vacuum_speed():
    z = np.zeros_like(X)
    eta = trace_eta(X[10:-10], 0.02, z, z, X)
    np.testing.assert_allclose(eta, X[10:-10] - 0.02, atol=1e-15)


def test_traces_symmetric():
    rng = np.random.default_rng(2)
    g_old, g_new = rng.uniform(-1.2, 1.2, (2, X.size))
    # reflecting x -> -x swaps the two families
    xi = trace_xi(X[5:-5], 0.03, g_old, g_new, X)
    eta = trace_eta(-X[5:-5], 0.03, g_old[::-1], g_new[::-1], X)
    np.testing.assert_allclose(xi, -eta, atol=1e-14)


def test_feet_within_one_step():
    rng = np.random.default_rng(3)
    g_old, g_new = rng.uniform(-1.5, 1.5, (2, X.size))
    dt = 0.04
    xi = trace_xi(X[3:-3], dt, g_old, g_new, X)
    eta = trace_eta(X[3:-3], dt, g_old, g_new, X)
    assert np.all(np.abs(xi - X[3:-3]) <= dt + 1e-15)
    assert np.all(np.abs(eta - X[3:-3]) <= dt + 1e-15)


def test_trace_outside_domain():
    z = np.zeros_like(X)
    with pytest.raises(DomainExitError):
        trace_xi(X, 0.02, z, z, X)
    foot = trace_xi(X, 0.02, z, z, X, allow_outside=True)
    assert foot[-1] == pytest.approx(2.02)
    with pytest.raises(ValueError):
        trace_eta(X, 0.0, z, z, X)


# ---------------------------------------------------------------- stepping

def test_simple_wave_translates():
    err, still = simple_wave_error(257)
    assert still == 0.0
    assert err < 5e-3


def test_simple_wave_mirror():
    err, still = simple_wave_error(257, mirror=True)
    assert still == 0.0
    assert err < 5e-3


def test_simple_wave_converges():
    e = [simple_wave_error(n)[0] for n in (129, 257)]
    assert e[0] / e[1] > 3.5


def test_constant_state_unchanged_in_interior():
    inv = InvariantGrid(X, np.full_like(X, 0.3), np.full_like(X, -0.2))
    out = inv
    for _ in range(5):
        out = field_step(out, zero_k(X.size), zero_k(X.size), 0.02)
    np.testing.assert_allclose(out.alpha[10:-10], 0.3, atol=1e-14)
    np.testing.assert_allclose(out.beta[10:-10], -0.2, atol=1e-14)


def _uniform_source_run(dt, T=0.4, k=(0.4, -0.3, 0.8)):
    inv = InvariantGrid.from_angles(X, np.full_like(X, 0.2), np.full_like(X, 0.1))
    kk = const_k(X.size, *k)
    for _ in range(int(round(T / dt))):
        inv = field_step(inv, kk, kk, dt)
    return inv.theta2[40], inv.thetaB[40]


def test_uniform_source_matches_ode():
    k0, k1, k2 = 0.4, -0.3, 0.8
    thB = 0.1

    def rhs(t, y):
        c = math.cos(y[0])
        return [c * (k0 * math.sin(thB) + k1 * math.sin(y[0]) + k2 * c)]

    ref = solve_ivp(rhs, (0, 0.4), [0.2], rtol=1e-13, atol=1e-14).y[0, -1]
    errs = []
    for dt in (0.02, 0.01):
        th2, thb = _uniform_source_run(dt)
        assert thb == pytest.approx(thB, abs=1e-14)
        errs.append(abs(th2 - ref))
    assert errs[1] < 1e-5
    assert errs[0] / errs[1] > 3.0


def test_guard_trips_near_half_pi():
    inv = InvariantGrid(X, np.zeros_like(X), np.full_like(X, HALF_PI - 2e-3))
    with pytest.raises(BlowUpProximityError):
        field_step(inv, const_k(X.size, 0, 0, 1.0), const_k(X.size, 0, 0, 1.0), 0.05)


def test_boundary_check():
    inv = InvariantGrid(X, np.zeros_like(X), 0.2 * bump((X - 1.9) / 0.3, 3))
    with pytest.raises(DomainExitError):
        field_step(inv, zero_k(X.size), zero_k(X.size), 0.02, boundary_tol=1e-10)


def test_return_feet():
    inv = InvariantGrid(X, np.zeros_like(X), np.zeros_like(X))
    out, feet = field_step(inv, zero_k(X.size), zero_k(X.size), 0.02, return_feet=True)
    assert isinstance(feet, FieldCharacteristic)
    np.testing.assert_allclose(feet.xi, X + 0.02, atol=1e-15)
    np.testing.assert_allclose(feet.eta, X - 0.02, atol=1e-15)
    assert np.all(out.alpha == 0.0)
