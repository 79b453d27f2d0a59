import math

import numpy as np
import pytest
import scipy.integrate
from hypothesis import given, settings
from hypothesis import strategies as st

from nsplab.core import Grid1D, PhysParamsOne, PhysParamsTwo, ValidationError, ddx, inner
from nsplab.diagnostics import (TwoFluidWeights, convergence_report, dissipation_rates, energy_report,
                                envelope_nonincreasing, first_order_energy, fit_decay, lyapunov_constant,
                                lyapunov_onefluid, poisson_identity_gap, psi_potential, twofluid_energy,
                                zero_order_energy)
from nsplab.poisson import solve_poisson_boltzmann, solve_poisson_linear
from nsplab.rarewave import profile_onefluid, profile_twofluid
from nsplab.sim import FluidState, Perturbation, SimConfig, TwoFluidState, run_simulation

ONE = PhysParamsOne(A=1.0, n_minus=1.0, n_plus=2.0, eps_smooth=0.3)
TWO = PhysParamsTwo(m_i=2.0, m_e=1.0, T_i=1.0, T_e=1.0, n_minus=1.0, n_plus=2.0, eps_smooth=0.3)
GRID = Grid1D(-40.0, 60.0, 1001)


def smooth_field(rng, grid, amp):
    x = grid.x
    f = sum(rng.uniform(-1, 1) * np.exp(-((x - rng.uniform(-10, 20)) / rng.uniform(1, 4)) ** 2) for _ in range(4))
    return amp * f / max(np.max(np.abs(f)), 1e-300)


def one_state(rng, amp_n=0.2, amp_u=0.2, t=2.0):
    pr = profile_onefluid(ONE, t, GRID)
    n = pr.nr + smooth_field(rng, GRID, amp_n)
    u = pr.ur + smooth_field(rng, GRID, amp_u)
    phi = solve_poisson_boltzmann(n, GRID.dx, ONE.phi_minus, ONE.phi_plus).phi
    return FluidState(t, n, u, phi), pr


def two_state(rng, amp=0.2, t=2.0):
    pr = profile_twofluid(TWO, t, GRID)
    n_i = pr.nr + smooth_field(rng, GRID, amp)
    n_e = pr.nr + smooth_field(rng, GRID, amp)
    u_i = pr.ur + smooth_field(rng, GRID, amp)
    u_e = pr.ur + smooth_field(rng, GRID, amp)
    phi = solve_poisson_linear(n_i - n_e, GRID.dx, TWO.phi_minus, TWO.phi_plus).phi
    return TwoFluidState(t, n_i, u_i, n_e, u_e, phi), pr


def test_psi_examples():
    assert psi_potential(1.7, 1.7, 3.0) == 0.0
    assert psi_potential(2.0, 1.0, 1.0) == pytest.approx(0.1931471805599453, abs=1e-15)
    q, _ = scipy.integrate.quad(lambda s: (s - 1.0) / s**2, 1.0, 2.0)
    assert psi_potential(2.0, 1.0, 1.0) == pytest.approx(q, rel=1e-12)
    for n in (1 - 1e-3, 1 + 1e-3):
        assert psi_potential(n, 1.0, 1.0) / (n - 1) ** 2 == pytest.approx(0.5, abs=1e-3)


def test_psi_matches_quadrature_on_log_grid():
    vals = np.geomspace(0.1, 10, 20)
    for n in vals:
        for nr in vals:
            q, _ = scipy.integrate.quad(lambda s: (s - nr) / s**2, nr, n, epsabs=0, epsrel=1e-13)
            assert psi_potential(n, nr, 1.0) == pytest.approx(q, rel=1e-10, abs=1e-300)


def test_psi_series_branch_is_continuous():
    nr = 1.3
    for r in (0.99e-3, 1.01e-3, -0.99e-3, -1.01e-3):
        n = nr / (1 - r)
        q, _ = scipy.integrate.quad(lambda s: (s - nr) / s**2, nr, n, epsabs=0, epsrel=1e-13)
        assert psi_potential(n, nr, 1.0) == pytest.approx(q, rel=1e-10)


def test_psi_rejects_nonpositive():
    with pytest.raises(ValidationError):
        psi_potential(0.0, 1.0, 1.0)
    with pytest.raises(ValidationError):
        psi_potential(1.0, -1.0, 1.0)


def test_state_equal_profile_has_no_flow_energy():
    pr = profile_onefluid(ONE, 2.0, GRID)
    phi = solve_poisson_boltzmann(pr.nr, GRID.dx, ONE.phi_minus, ONE.phi_plus).phi
    st_ = FluidState(2.0, pr.nr.copy(), pr.ur.copy(), phi)
    z = zero_order_energy(st_, pr, ONE, GRID)
    assert z["kinetic"] == 0.0 and z["pressure"] == 0.0
    f = first_order_energy(st_, pr, ONE, GRID)
    assert f["total"] == 0.0
    d = dissipation_rates(st_, pr, ONE, GRID)
    assert d["wave_weighted"] == 0.0 and d["viscous"] == 0.0


def test_density_bump_only_pressure():
    pr = profile_onefluid(ONE, 2.0, GRID)
    n = pr.nr + 0.1 * np.exp(-GRID.x**2)
    phi = solve_poisson_boltzmann(n, GRID.dx, ONE.phi_minus, ONE.phi_plus).phi
    z = zero_order_energy(FluidState(2.0, n, pr.ur.copy(), phi), pr, ONE, GRID)
    assert z["kinetic"] == 0.0 and z["pressure"] > 0


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 2**31 - 1))
def test_zero_order_nonnegative_for_small_potential(seed):
    s, pr = one_state(np.random.default_rng(seed))
    assert np.max(np.abs(s.phi - pr.phir)) <= 1
    assert zero_order_energy(s, pr, ONE, GRID)["total"] >= 0


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 2**31 - 1))
def test_lyapunov_dominates_h1_norm(seed):
    s, pr = one_state(np.random.default_rng(seed), 0.3, 0.3)
    nt, ut = s.n - pr.nr, s.u - pr.ur
    dx = GRID.dx
    h1 = inner(nt, nt, dx) + inner(ut, ut, dx) + inner(ddx(nt, dx), ddx(nt, dx), dx) + inner(ddx(ut, dx), ddx(ut, dx), dx)
    assert lyapunov_onefluid(s, pr, ONE, GRID) >= 0.1 * h1


def test_lyapunov_constant_values():
    assert lyapunov_constant(ONE) == 4.0
    assert lyapunov_constant(PhysParamsOne(A=1.0, n_minus=0.5, n_plus=2.0)) == 16.0
    assert lyapunov_constant(TWO) == 8.0


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 2**31 - 1))
def test_dissipation_nonnegative(seed):
    rng = np.random.default_rng(seed)
    s, pr = one_state(rng)
    assert all(v >= 0 for v in dissipation_rates(s, pr, ONE, GRID).values())
    s2, pr2 = two_state(rng)
    assert all(v >= 0 for v in dissipation_rates(s2, pr2, TWO, GRID).values())


def test_weights():
    w = TwoFluidWeights.default(TWO)
    assert (w.beta, w.gamma) == (1.0, 2.0)
    w.check(TWO)
    with pytest.raises(ValidationError):
        TwoFluidWeights(1.0, 1.0).check(TWO)
    with pytest.raises(ValidationError):
        twofluid_energy(two_state(np.random.default_rng(0))[0], profile_twofluid(TWO, 2.0, GRID), TWO, GRID,
                        TwoFluidWeights(1.0, 1.0))


def test_quad_form_null_direction():
    s, pr = two_state(np.random.default_rng(1))
    w = TwoFluidWeights.default(TWO)
    ute = s.u_e - pr.ur
    s.u_i = pr.ur - math.sqrt(w.beta * TWO.m_e / (w.gamma * TWO.m_i)) * ute
    assert abs(twofluid_energy(s, pr, TWO, GRID)["quad_form"]) <= 1e-15


def test_quad_form_equal_velocities():
    s, pr = two_state(np.random.default_rng(2))
    s.u_e = s.u_i.copy()
    ut = s.u_i - pr.ur
    # (sqrt(m_i^2) + sqrt(m_e^2))^2 / (2 (m_i + m_e)) = (m_i + m_e)/2 with beta=m_e, gamma=m_i
    expected = 0.5 * (TWO.m_i + TWO.m_e) * inner(ut**2, pr.nr * pr.dur, GRID.dx)
    assert twofluid_energy(s, pr, TWO, GRID)["quad_form"] == pytest.approx(expected, rel=1e-12)


@pytest.mark.parametrize("scale", [0.5, 2.0, 10.0])
def test_quad_form_scale_invariant(scale):
    s, pr = two_state(np.random.default_rng(3))
    w = TwoFluidWeights.default(TWO)
    a = twofluid_energy(s, pr, TWO, GRID, w)["quad_form"]
    b = twofluid_energy(s, pr, TWO, GRID, TwoFluidWeights(scale * w.beta, scale * w.gamma))["quad_form"]
    assert b == pytest.approx(a, rel=1e-13)


def test_quad_form_nonnegative_many_pairs():
    rng = np.random.default_rng(4)
    pr = profile_twofluid(TWO, 2.0, GRID)
    for _ in range(1000):
        ui = pr.ur + rng.normal(size=GRID.n_cells)
        ue = pr.ur + rng.normal(size=GRID.n_cells)
        s = TwoFluidState(2.0, pr.nr, ui, pr.nr, ue, pr.phir)
        assert twofluid_energy(s, pr, TWO, GRID)["quad_form"] >= 0


def test_quad_form_split_is_exact():
    s, pr = two_state(np.random.default_rng(5))
    e = twofluid_energy(s, pr, TWO, GRID)
    assert e["quad_form"] + e["density_correction"] + e["time_correction"] == pytest.approx(e["half_I0_plus_I6"],
                                                                                           rel=1e-12, abs=1e-16)


def test_poisson_identity_two_ways():
    s, pr = one_state(np.random.default_rng(6))
    assert poisson_identity_gap(s, pr, GRID) <= 1e-10
    rep = energy_report(s, pr, ONE, GRID)
    assert rep.elliptic_identity <= 1e-10


def test_energy_report_twofluid_fields():
    s, pr = two_state(np.random.default_rng(7))
    rep = energy_report(s, pr, TWO, GRID)
    assert rep.quad_form >= 0 and rep.species_gap == pytest.approx(np.max(np.abs(s.u_i - s.u_e)))
    assert rep.sup_phi == pytest.approx(np.max(np.abs(ddx(s.phi - pr.phir, GRID.dx))))
    assert rep.sup_distance == max(rep.sup_n, rep.sup_u)


def test_convergence_report_and_profile_tracking():
    p = PhysParamsOne(A=1.0, n_minus=1.0, n_plus=2.0, u_minus=-math.sqrt(2.0), eps_smooth=0.1)
    grid = Grid1D(-80.0, 80.0, 801)
    tr = run_simulation(SimConfig("one_fluid", p, grid, 2.0, perturbation=Perturbation(amplitude=0.0),
                                  output_stride=20))
    rows = convergence_report(tr)
    assert len(rows) >= 2 and rows[0]["t"] == 0.0
    assert all(r["sup_n"] <= 0.01 for r in rows)
    with pytest.raises(ValidationError):
        convergence_report(type("T", (), {"snapshots": tr.snapshots[:1]})())


def test_fit_decay_examples():
    t = np.geomspace(1, 1000, 31)
    r = fit_decay(np.column_stack([t, 1 / t]))
    assert r["slope"] == pytest.approx(-1.0, abs=1e-10)
    r = fit_decay(np.column_stack([t, 3 * t**-0.5]))
    assert r["slope"] == pytest.approx(-0.5, abs=1e-10) and r["constant"] == pytest.approx(3.0, rel=1e-10)
    assert r["window"] == pytest.approx((100.0, 1000.0))


def test_fit_decay_profile_gradient():
    from nsplab.rarewave import burgers_derivatives, fan_grid, wave_for

    p = PhysParamsOne(A=1.0, n_minus=1.0, n_plus=2.0, eps_smooth=0.1)
    wave = wave_for(p)
    t = np.geomspace(10, 1000, 21)
    vals = [np.max(burgers_derivatives(wave, s + 1, fan_grid(wave, s + 1).x).wx) for s in t]
    assert -1.1 <= fit_decay(np.column_stack([t, vals]))["slope"] <= -0.9


@pytest.mark.parametrize("series", [np.array([[1, 1], [2, 0]] + [[k, 1] for k in range(3, 20)], float),
                                    np.column_stack([np.linspace(1, 5, 20), np.ones(20)]),
                                    np.column_stack([np.geomspace(1, 100, 5), np.ones(5)])])
def test_fit_decay_rejects(series):
    with pytest.raises(ValidationError):
        fit_decay(series)


def test_envelope():
    t = np.linspace(0, 100, 1001)
    down = envelope_nonincreasing(t, np.exp(-t / 30) * (1 + 0.01 * np.sin(5 * t)), 5.0)
    assert down["passes"] and len(down["block_maxima"]) == 10
    up = envelope_nonincreasing(t, 1 + t / 100, 5.0)
    assert not up["passes"] and up["worst_ratio"] > 1.05
