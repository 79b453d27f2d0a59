import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from nsplab.core import NumericalError, PhysParamsOne, ValidationError, d2dx2
from nsplab.poisson import solve_poisson_boltzmann, solve_poisson_linear, thomas, tridiag_solve
from nsplab.rarewave import fan_grid, profile_onefluid, wave_for


def test_tridiag_identity():
    rhs = np.array([3.0, -1.0, 2.5, 7.0])
    z = np.zeros(4)
    assert np.array_equal(tridiag_solve(z, np.ones(4), z, rhs), rhs)


def test_tridiag_hand_example():
    x = tridiag_solve([0, -1, -1], [2, 2, 2], [-1, -1, 0], [1, 0, 0])
    assert np.allclose(x, [0.75, 0.5, 0.25], atol=1e-15)


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 2**31 - 1))
def test_tridiag_random_dominant(seed):
    rng = np.random.default_rng(seed)
    n = 100
    lo, up = rng.uniform(-1, 1, (2, n))
    lo[0] = up[-1] = 0.0
    diag = (np.abs(lo) + np.abs(up) + rng.uniform(0.1, 2, n)) * rng.choice([-1, 1], n)
    b = rng.normal(size=n)
    x = tridiag_solve(lo, diag, up, b)
    Ax = diag * x
    Ax[1:] += lo[1:] * x[:-1]
    Ax[:-1] += up[:-1] * x[1:]
    assert np.max(np.abs(Ax - b)) <= 1e-12 * np.max(np.abs(b))
    assert np.allclose(x, thomas(lo, diag, up, b), rtol=1e-12, atol=1e-13)


def test_tridiag_zero_pivot():
    with pytest.raises(NumericalError):
        tridiag_solve([0, 0], [0.0, 1.0], [0, 0], [1.0, 1.0])
    with pytest.raises(NumericalError):
        thomas([0, 0], [0.0, 1.0], [0, 0], [1.0, 1.0])


def test_pb_constant_equilibrium():
    rep = solve_poisson_boltzmann(np.ones(101), 0.1, 0.0, 0.0)
    assert np.all(rep.phi == 0.0)
    assert rep.iterations == 1 and rep.converged


@pytest.mark.parametrize("n0", [0.3, 1.0, 2.5])
def test_pb_fixed_point(n0):
    rep = solve_poisson_boltzmann(np.full(200, n0), 0.05, -math.log(n0), -math.log(n0))
    assert np.max(np.abs(rep.phi + math.log(n0))) <= 1e-13


def test_pb_manufactured_tanh():
    dx = 0.005
    x = np.linspace(-10, 10, 4001)
    phi_star = np.tanh(x)
    n = d2dx2(phi_star, dx) + np.exp(-phi_star)
    rep = solve_poisson_boltzmann(n, dx, phi_star[0], phi_star[-1], initial_guess=np.zeros_like(x),
                                  check_positive=False)
    assert rep.converged
    assert np.max(np.abs(rep.phi - phi_star)) <= 1e-8
    h = rep.residual_history
    assert h[-1] <= 10 * 0.5 * h[-2] ** 2 / h[-3]


def test_pb_quadratic_convergence_certificate_on_coarse_grid():
    x = np.linspace(-8, 8, 161)
    dx = x[1] - x[0]
    n = 1.0 + 0.8 * np.exp(-x**2)
    rep = solve_poisson_boltzmann(n, dx, 0.0, 0.0, initial_guess=np.zeros_like(x))
    h = rep.residual_history
    assert len(h) >= 3 and rep.converged
    assert h[-1] <= 10 * 0.5 * h[-2] ** 2 / h[-3]
    assert rep.final_residual <= 1e-10 * (1 + n.max())


def test_pb_quasineutral_gap_shrinks_in_time():
    p = PhysParamsOne(A=1.0, n_minus=1.0, n_plus=2.0, eps_smooth=0.5)
    gaps = []
    for t in (1.0, 10.0, 100.0):
        grid = fan_grid(wave_for(p), t + 1, dx=0.1)
        pr = profile_onefluid(p, t, grid)
        rep = solve_poisson_boltzmann(pr.nr, grid.dx, p.phi_minus, p.phi_plus)
        gap = np.max(np.abs(rep.phi + np.log(pr.nr)))
        assert gap <= 2 * np.max(np.abs(pr.d2phir))
        gaps.append(gap)
    assert gaps[0] > gaps[1] > gaps[2]


def test_pb_comparison_principle():
    rng = np.random.default_rng(3)
    x = np.linspace(-10, 10, 201)
    n1 = 1 + 0.5 * np.exp(-x**2) + 0.1 * rng.uniform(size=x.size)
    n2 = n1 + rng.uniform(0, 0.3, size=x.size)
    p1 = solve_poisson_boltzmann(n1, x[1] - x[0], 0.0, 0.0).phi
    p2 = solve_poisson_boltzmann(n2, x[1] - x[0], 0.0, 0.0).phi
    # larger density lowers the potential: phi'' = n - e^{-phi} is monotone in -phi
    assert np.all(p2 <= p1 + 1e-14)


def test_pb_rejects_nonpositive_density():
    n = np.ones(20)
    n[5] = 0.0
    with pytest.raises(ValidationError):
        solve_poisson_boltzmann(n, 0.1, 0.0, 0.0)
    with pytest.raises(NumericalError):
        solve_poisson_boltzmann(np.ones(20), 0.1, np.nan, 0.0)


def test_pb_stagnation_is_flagged():
    x = np.linspace(-10, 10, 201)
    rep = solve_poisson_boltzmann(1 + np.exp(-x**2), x[1] - x[0], 0.0, 0.0,
                                  initial_guess=np.full_like(x, 5.0), max_iter=1)
    assert not rep.converged and len(rep.residual_history) == 2


def test_linear_examples():
    assert np.all(solve_poisson_linear(np.zeros(11), 0.1, 0.0, 0.0).phi == 0.0)
    x = np.linspace(0, 1, 11)
    assert np.allclose(solve_poisson_linear(np.zeros(11), 0.1, 0.0, 1.0).phi, x, atol=1e-15)
    for N in (101, 201):
        x = np.linspace(0, math.pi, N)
        dx = x[1] - x[0]
        rep = solve_poisson_linear(-np.sin(x), dx, 0.0, 0.0)
        assert np.max(np.abs(rep.phi - np.sin(x))) <= 5 * dx**2
        assert rep.final_residual <= 1e-12 * (1 + 1.0)


def test_linear_affine_exact_with_any_bc():
    x = np.linspace(-3, 4, 71)
    rep = solve_poisson_linear(np.zeros_like(x), x[1] - x[0], -2.0, 5.0)
    assert np.allclose(rep.phi, -2.0 + (x + 3), atol=1e-13)
