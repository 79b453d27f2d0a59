import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from nsplab.core import (Grid1D, NumericalError, PhysParamsOne, PhysParamsTwo, ValidationError, d2dx2, ddx,
                         lp_norm, r1_curve_velocity, r2_curve_velocity, sobolev_sup_check, trapz)


def test_grid_spacing_and_nodes():
    g = Grid1D(0.0, 1.0, 11)
    assert g.dx == pytest.approx(0.1)
    assert g.x[0] == 0.0 and g.x[-1] == pytest.approx(1.0)
    assert Grid1D.from_spacing(-60.0, 60.0, 0.05).dx <= 0.05


@pytest.mark.parametrize("args", [(1.0, 0.0, 20), (0.0, 1.0, 3), (0.0, np.inf, 20), (0.0, 1.0, 10.5)])
def test_grid_rejects_bad_input(args):
    with pytest.raises(ValidationError):
        Grid1D(*args)


def test_ddx_constant_and_linear_exact():
    x = np.linspace(-3, 5, 81)
    dx = x[1] - x[0]
    assert np.allclose(ddx(np.full_like(x, 4.2), dx), 0.0, atol=1e-13)
    assert np.allclose(ddx(2.0 * x - 1, dx), 2.0, atol=1e-13, rtol=0)


def test_ddx_sine_accuracy_and_order():
    errs = []
    for dx in (0.01, 0.005):
        x = np.arange(0, 2 * np.pi + dx / 2, dx)
        e = np.max(np.abs(ddx(np.sin(x), dx) - np.cos(x)))
        assert e <= 5 * dx**2
        errs.append(e)
    assert errs[0] / errs[1] >= 3.5


def test_d2dx2_polynomials_exact():
    x = np.linspace(-2, 2, 41)
    dx = x[1] - x[0]
    assert np.allclose(d2dx2(x, dx)[1:-1], 0.0, atol=1e-11)
    assert np.allclose(d2dx2(x**2, dx)[1:-1], 2.0, atol=1e-11, rtol=0)


def test_d2dx2_sine_accuracy_and_order():
    errs = []
    for dx in (0.01, 0.005):
        x = np.arange(0, 2 * np.pi + dx / 2, dx)
        e = np.max(np.abs(d2dx2(np.sin(x), dx) + np.sin(x))[1:-1])
        assert e <= 5 * dx**2
        errs.append(e)
    assert errs[0] / errs[1] >= 3.5


def test_derivatives_reject_nonfinite():
    f = np.ones(10)
    f[3] = np.nan
    with pytest.raises(NumericalError):
        ddx(f, 0.1)
    with pytest.raises(NumericalError):
        d2dx2(f, 0.1)


@settings(max_examples=30, deadline=None)
@given(st.floats(-5, 5), st.floats(-5, 5), st.integers(0, 2**31 - 1))
def test_difference_operators_are_linear(a, b, seed):
    rng = np.random.default_rng(seed)
    f, g = rng.normal(size=(2, 50))
    for op in (ddx, d2dx2):
        lhs = op(a * f + b * g, 0.1)
        rhs = a * op(f, 0.1) + b * op(g, 0.1)
        assert np.allclose(lhs, rhs, atol=1e-11 * (1 + abs(a) + abs(b)) * 1e2)


def test_lp_norm_examples():
    x = np.linspace(0, 1, 101)
    dx = x[1] - x[0]
    assert lp_norm(np.zeros(20), 0.1, 1) == 0.0
    assert lp_norm(np.zeros(20), 0.1, np.inf) == 0.0
    assert abs(lp_norm(np.ones_like(x), dx, 2) - 1.0) <= dx
    y = np.linspace(-20, 20, 4001)
    assert lp_norm(np.tanh(y), y[1] - y[0], np.inf) == pytest.approx(math.tanh(20.0))
    with pytest.raises(ValidationError):
        lp_norm(x, dx, 0.5)


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2**31 - 1), st.sampled_from([1.0, 1.5, 2.0, 3.0, np.inf]))
def test_lp_norm_monotone(seed, p):
    rng = np.random.default_rng(seed)
    f = rng.normal(size=40)
    g = np.abs(f) + rng.uniform(0, 1, size=40)
    assert lp_norm(f, 0.1, p) <= lp_norm(g, 0.1, p) * (1 + 1e-14)


def test_trapz_exact_for_linear():
    x = np.linspace(0, 3, 31)
    assert trapz(2 * x + 1, x[1] - x[0]) == pytest.approx(12.0, abs=1e-13)


def test_sobolev_zero_and_examples():
    z = sobolev_sup_check(np.zeros(50), 0.1)
    assert z.lhs == 0.0 and z.rhs == 0.0
    x = np.linspace(-10, 10, 2001)
    r = sobolev_sup_check(np.exp(-x**2), x[1] - x[0])
    assert r.applicable and r.holds
    assert r.lhs == pytest.approx(1.0)
    # both ||f||_2 and ||f'||_2 equal (pi/2)^(1/4) for the Gaussian
    assert r.rhs == pytest.approx(math.sqrt(2) * (math.pi / 2) ** 0.25, rel=1e-4)
    y = np.linspace(-20, 20, 4001)
    s = sobolev_sup_check(1 / np.cosh(y), y[1] - y[0])
    assert s.lhs == pytest.approx(1.0) and s.lhs <= s.rhs


def test_sobolev_flags_inapplicable():
    x = np.linspace(0, 1, 101)
    r = sobolev_sup_check(np.ones_like(x), x[1] - x[0])
    assert not r.applicable and r.holds


def test_onefluid_params():
    p = PhysParamsOne(A=1.0, n_minus=1.0, n_plus=2.0)
    assert p.c == pytest.approx(math.sqrt(2))
    assert p.u_plus == pytest.approx(0.9802581434685472, abs=1e-15)
    assert p.is_r2()
    assert p.phi_minus == 0.0 and p.phi_plus == pytest.approx(-math.log(2))
    q = PhysParamsOne(A=3.0, n_minus=1.0, n_plus=math.e)
    assert q.c == 2.0 and q.u_plus == pytest.approx(2.0)
    with pytest.raises(ValidationError):
        PhysParamsOne(A=-1.0, n_minus=1.0, n_plus=2.0)


def test_twofluid_params():
    p = PhysParamsTwo(m_i=2.0, m_e=1.0, T_i=1.0, T_e=2.0, n_minus=1.0, n_plus=2.0)
    assert p.c**2 == pytest.approx(1.0, abs=1e-15)
    assert p.phi_coeff == pytest.approx(-1.0)
    s = PhysParamsTwo(m_i=3.0, m_e=1.5, T_i=2.0, T_e=1.0, n_minus=1.0, n_plus=2.0)
    assert s.phi_coeff == 0.0
    assert p.sound_speed() >= p.c


def test_riemann_curves_are_mirror_images():
    n = np.linspace(0.5, 3, 11)
    r1 = r1_curve_velocity(n, 1.0, 0.2, 1.3)
    r2 = r2_curve_velocity(n, 1.0, 0.2, 1.3)
    assert np.allclose(r1 + r2, 0.4)
