"""Time integration of the one-fluid and two-fluid Navier-Stokes-Poisson systems.

Each step is an IMEX Heun scheme: the transport, pressure and electrostatic
terms are advanced explicitly (predictor plus trapezoidal corrector), the
viscous term ``u_xx / n`` is theta-implicit (one tridiagonal solve per stage),
and the potential is re-solved after every stage.  End nodes are pinned to
the far-field states.
"""

from __future__ import annotations

import hashlib
import json
import logging
import math
from dataclasses import asdict, dataclass, field
from typing import Union

import numpy as np

from . import poisson
from .core import Grid1D, NumericalError, PhysParamsOne, PhysParamsTwo, ValidationError, trapz
from .rarewave import profile_onefluid, profile_twofluid, profile_values, wave_for

log = logging.getLogger(__name__)

DISSIPATION_COEFF = 0.02


class PositivityError(NumericalError):
    """A density became nonpositive during a step."""

    def __init__(self, message, time=None, state=None):
        super().__init__(message)
        self.time = time
        self.state = state


@dataclass
class FluidState:
    time: float
    n: np.ndarray
    u: np.ndarray
    phi: np.ndarray

    def copy(self) -> "FluidState":
        return FluidState(self.time, self.n.copy(), self.u.copy(), self.phi.copy())


@dataclass
class TwoFluidState:
    time: float
    n_i: np.ndarray
    u_i: np.ndarray
    n_e: np.ndarray
    u_e: np.ndarray
    phi: np.ndarray

    def copy(self) -> "TwoFluidState":
        return TwoFluidState(self.time, self.n_i.copy(), self.u_i.copy(), self.n_e.copy(),
                             self.u_e.copy(), self.phi.copy())


State = Union[FluidState, TwoFluidState]


@dataclass(frozen=True)
class Perturbation:
    """Smooth compactly-concentrated perturbation added to the profile at t=0.

    ``target`` selects ``"n"``, ``"u"`` or ``"both"``.  For the two-fluid
    model ``species`` is ``"both"`` (identical data), ``"ion"`` or
    ``"electron"``.  ``shape="random"`` superposes a few Gaussians drawn from
    ``seed``.
    """

    shape: str = "gaussian"
    amplitude: float = 0.0
    target: str = "n"
    center: float = 0.0
    width: float = 1.0
    species: str = "both"
    seed: int = 0

    def __post_init__(self):
        if self.amplitude < 0:
            raise ValidationError("perturbation amplitude must be >= 0")
        if self.shape not in ("gaussian", "sech", "random"):
            raise ValidationError(f"unknown perturbation shape {self.shape!r}")
        if self.target not in ("n", "u", "both"):
            raise ValidationError(f"unknown perturbation target {self.target!r}")
        if self.species not in ("both", "ion", "electron"):
            raise ValidationError(f"unknown perturbation species {self.species!r}")
        if not self.width > 0:
            raise ValidationError("perturbation width must be positive")

    def evaluate(self, x) -> np.ndarray:
        s = (np.asarray(x) - self.center) / self.width
        if self.amplitude == 0:
            return np.zeros_like(s)
        if self.shape == "gaussian":
            return self.amplitude * np.exp(-s * s)
        if self.shape == "sech":
            return self.amplitude / np.cosh(np.clip(s, -700, 700))
        rng = np.random.default_rng(self.seed)
        k = 5
        centres = rng.uniform(-3.0, 3.0, k)
        weights = rng.uniform(-1.0, 1.0, k)
        f = sum(w * np.exp(-((s - c) ** 2)) for w, c in zip(weights, centres))
        return self.amplitude * f / np.max(np.abs(f))


@dataclass(frozen=True)
class SimConfig:
    """Everything needed to reproduce one run."""

    model: str
    params: Union[PhysParamsOne, PhysParamsTwo]
    grid: Grid1D
    t_final: float
    cfl_number: float = 0.4
    viscous_theta: float = 0.5
    output_stride: int = 100
    perturbation: Perturbation = field(default_factory=Perturbation)
    dt: float | None = None
    keep_states: bool = False
    sponge_width: float = 0.0
    sponge_strength: float = 1.0

    def __post_init__(self):
        if self.model not in ("one_fluid", "two_fluid"):
            raise ValidationError(f"model must be one_fluid or two_fluid, got {self.model!r}")
        expected = PhysParamsOne if self.model == "one_fluid" else PhysParamsTwo
        if not isinstance(self.params, expected):
            raise ValidationError(f"{self.model} needs {expected.__name__}")
        if self.t_final < 0:
            raise ValidationError("t_final must be >= 0")
        if not 0 < self.cfl_number <= 1:
            raise ValidationError("cfl_number must lie in (0, 1]")
        if not 0.5 <= self.viscous_theta <= 1:
            raise ValidationError("viscous_theta must lie in [0.5, 1]")
        if self.output_stride < 1:
            raise ValidationError("output_stride must be >= 1")
        if self.dt is not None and not self.dt > 0:
            raise ValidationError("fixed dt must be positive")
        if self.sponge_width < 0 or self.sponge_strength < 0:
            raise ValidationError("sponge width and strength must be >= 0")
        if 2.0 * self.sponge_width >= self.grid.length:
            raise ValidationError("sponge layers overlap")

    def to_dict(self) -> dict:
        d = asdict(self)
        d["grid"] = {"x_min": self.grid.x_min, "x_max": self.grid.x_max, "n_cells": self.grid.n_cells}
        return d

    def digest(self) -> str:
        blob = json.dumps(self.to_dict(), sort_keys=True, default=repr).encode()
        return hashlib.sha256(blob).hexdigest()


class Sponge:
    """Absorbing layers next to both ends.

    Inside a layer of width ``W`` the equations gain the relaxation terms
    ``-sigma(x) (n - n^r)`` and ``-sigma(x) (u - u^r)`` with
    ``sigma = strength * (depth/W)^2``, so outgoing perturbations are damped
    instead of reflected by the pinned end nodes.  The profile itself is
    left untouched.
    """

    def __init__(self, params, grid: Grid1D, width: float, strength: float):
        x = grid.x
        depth = np.maximum(np.maximum(grid.x_min + width - x, x - (grid.x_max - width)), 0.0)
        self.params = params
        self.sigma = strength * (depth / width) ** 2 if width > 0 else np.zeros_like(x)
        self.idx = np.nonzero(self.sigma > 0)[0]
        self.x = x[self.idx]
        self.active = self.idx.size > 0

    def source(self, t, n, u):
        """Relaxation rates for ``n`` and ``u`` at time ``t``."""
        sn = np.zeros_like(n)
        su = np.zeros_like(u)
        if self.active:
            nr, ur = profile_values(self.params, t, self.x)
            s = self.sigma[self.idx]
            sn[self.idx] = -s * (n[self.idx] - nr)
            su[self.idx] = -s * (u[self.idx] - ur)
            sn[0] = sn[-1] = su[0] = su[-1] = 0.0
        return sn, su

    def mass(self, s, weight):
        """``weight * sum(s)`` over the layer nodes (the source vanishes elsewhere)."""
        return weight * math.fsum(s[self.idx])


def make_sponge(config: "SimConfig") -> Sponge | None:
    if config.sponge_width <= 0 or config.sponge_strength <= 0:
        return None
    return Sponge(config.params, config.grid, config.sponge_width, config.sponge_strength)


def profile_for(params, t: float, grid: Grid1D):
    if isinstance(params, PhysParamsTwo):
        return profile_twofluid(params, t, grid)
    return profile_onefluid(params, t, grid)


def validate_domain(config: SimConfig, tol: float = 1e-4) -> None:
    """Check the smoothed fan stays clear of both ends over ``[0, t_final]``.

    Raises:
        ValidationError: if the profile at either end departs from its
            far-field value by more than ``tol * delta_r`` at t=0 or
            t=t_final, or the perturbation is not negligible at the ends.
    """
    p = config.params
    wave = wave_for(p)
    g = config.grid
    ends = Grid1D(g.x_min, g.x_max, 8)
    for t in {0.0, float(config.t_final)}:
        prof = profile_for(p, t, ends)
        gap = max(abs(prof.nr[0] - p.n_minus), abs(prof.nr[-1] - p.n_plus),
                  abs(prof.ur[0] - p.u_minus), abs(prof.ur[-1] - p.u_plus))
        if gap > tol * p.delta_r:
            need_lo = wave.w_minus * (t + 1.0) - 10.0 / p.eps_smooth
            need_hi = wave.w_plus * (t + 1.0) + 10.0 / p.eps_smooth
            raise ValidationError(
                f"domain [{g.x_min:g}, {g.x_max:g}] does not contain the fan at t={t:g}; "
                f"it spans about [{need_lo:.1f}, {need_hi:.1f}]")
    pert = config.perturbation
    if pert.amplitude > 0:
        edge = np.abs(pert.evaluate(np.array([g.x_min, g.x_max])))
        if np.max(edge) > 1e-10 * pert.amplitude:
            raise ValidationError("perturbation is not negligible at the domain ends")


def initial_state(config: SimConfig) -> State:
    """Profile at t=0 plus the configured perturbation, with phi solved.

    Raises:
        ValidationError: if the perturbed density is nonpositive somewhere.
    """
    p, g = config.params, config.grid
    prof = profile_for(p, 0.0, g)
    bump = config.perturbation.evaluate(g.x)
    tgt = config.perturbation.target
    dn = bump if tgt in ("n", "both") else np.zeros_like(bump)
    du = bump if tgt in ("u", "both") else np.zeros_like(bump)

    def pinned(f, left, right):
        f = f.copy()
        f[0], f[-1] = left, right
        return f

    if config.model == "one_fluid":
        n = pinned(prof.nr + dn, p.n_minus, p.n_plus)
        u = pinned(prof.ur + du, p.u_minus, p.u_plus)
        if np.any(n <= 0):
            raise ValidationError("initial density is nonpositive")
        rep = poisson.solve_poisson_boltzmann(n, g.dx, p.phi_minus, p.phi_plus)
        return FluidState(0.0, n, u, rep.phi)
    sp = config.perturbation.species
    z = np.zeros_like(bump)
    n_i = pinned(prof.nr + (dn if sp in ("both", "ion") else z), p.n_minus, p.n_plus)
    n_e = pinned(prof.nr + (dn if sp in ("both", "electron") else z), p.n_minus, p.n_plus)
    u_i = pinned(prof.ur + (du if sp in ("both", "ion") else z), p.u_minus, p.u_plus)
    u_e = pinned(prof.ur + (du if sp in ("both", "electron") else z), p.u_minus, p.u_plus)
    if np.any(n_i <= 0) or np.any(n_e <= 0):
        raise ValidationError("initial density is nonpositive")
    rep = poisson.solve_poisson_linear(n_i - n_e, g.dx, p.phi_minus, p.phi_plus)
    return TwoFluidState(0.0, n_i, u_i, n_e, u_e, rep.phi)


def cfl_dt(state: State, params, grid: Grid1D, cfl_number: float = 0.4) -> float:
    """Advective time step ``cfl * dx / max(|u| + c)``.

    Viscosity is implicit and imposes no limit; the explicit fourth-difference
    dissipation and (two-fluid) plasma oscillation limits are far looser at
    the configured coefficient and are included only as a safeguard.
    """
    c = params.sound_speed()
    if isinstance(state, FluidState):
        vmax = float(np.max(np.abs(state.u))) + c
        wp = 0.0
    else:
        vmax = max(float(np.max(np.abs(state.u_i))), float(np.max(np.abs(state.u_e)))) + c
        wp = math.sqrt(float(np.max(state.n_i)) / params.m_i + float(np.max(state.n_e)) / params.m_e)
    dt = cfl_number * grid.dx / vmax
    if wp > 0:
        dt = min(dt, cfl_number / wp)
    return dt


def _mass_rhs(n, u, dx, kappa4):
    """Conservative update ``-d_x F`` and the two boundary face fluxes."""
    f = n * u
    F = 0.5 * (f[:-1] + f[1:])
    # fourth-difference dissipation on faces with a full 4-point stencil
    F[1:-1] += kappa4 * (n[3:] - 3.0 * n[2:-1] + 3.0 * n[1:-2] - n[:-3]) / dx**3
    dn = np.zeros_like(n)
    dn[1:-1] = -(F[1:] - F[:-1]) / dx
    return dn, F[0], F[-1]


def _central(f, dx):
    d = np.zeros_like(f)
    d[1:-1] = (f[2:] - f[:-2]) / (2.0 * dx)
    return d


def _viscous(u, n, dx, mu=1.0):
    v = np.zeros_like(u)
    v[1:-1] = mu * (u[2:] - 2.0 * u[1:-1] + u[:-2]) / (dx**2 * n[1:-1])
    return v


def _implicit_viscous(rhs, n, dx, coef, left, right):
    """Solve ``(I - coef/n * D2) u = rhs`` with pinned ends."""
    a = coef / (n * dx**2)
    lower = -a.copy()
    upper = -a.copy()
    diag = 1.0 + 2.0 * a
    diag[0] = diag[-1] = 1.0
    lower[0] = upper[0] = lower[-1] = upper[-1] = 0.0
    b = rhs.copy()
    b[0], b[-1] = left, right
    return poisson.tridiag_solve(lower, diag, upper, b)


@dataclass
class StepInfo:
    """Telemetry of the last step: boundary mass fluxes, absorbing-layer mass source and elliptic work."""

    flux_left: float = 0.0
    flux_right: float = 0.0
    sponge_mass: float = 0.0
    elliptic_iterations: int = 0
    elliptic_residual: float = 0.0


def _kappa4(dx, umax, c):
    return DISSIPATION_COEFF * dx**3 * (umax + c)


def _relax(sponge, t, n, u):
    if sponge is None:
        return 0.0, 0.0
    return sponge.source(t, n, u)


def step_onefluid(state: FluidState, params: PhysParamsOne, grid: Grid1D, dt: float,
                  theta: float = 0.5, info: StepInfo | None = None,
                  sponge: Sponge | None = None) -> FluidState:
    """Advance the one-fluid system by ``dt``.

    Raises:
        PositivityError: if the density becomes nonpositive.
        NumericalError: if the Poisson-Boltzmann Newton iteration stalls.
    """
    dx = grid.dx
    A = params.A
    t0 = state.time
    n0, u0, phi0 = state.n, state.u, state.phi
    k4 = _kappa4(dx, float(np.max(np.abs(u0))), params.c)

    def rates(t, n, u, phi):
        dn, fl, fr = _mass_rhs(n, u, dx, k4)
        du = -u * _central(u, dx) - A * _central(n, dx) / n + _central(phi, dx)
        du[0] = du[-1] = 0.0
        sn, su = _relax(sponge, t, n, u)
        return dn + sn, du + su, fl, fr, sn

    dn0, du0, fl0, fr0, s0 = rates(t0, n0, u0, phi0)
    v0 = (1.0 - theta) * dt * _viscous(u0, n0, dx)

    n1 = n0 + dt * dn0
    _check_positive(n1, state)
    u1 = _implicit_viscous(u0 + dt * du0 + v0, n1, dx, theta * dt, params.u_minus, params.u_plus)
    r1 = poisson.solve_poisson_boltzmann(n1, dx, params.phi_minus, params.phi_plus, initial_guess=phi0)
    _check_elliptic(r1, state)

    dn1, du1, fl1, fr1, s1 = rates(t0 + dt, n1, u1, r1.phi)
    n2 = n0 + 0.5 * dt * (dn0 + dn1)
    _check_positive(n2, state)
    u2 = _implicit_viscous(u0 + 0.5 * dt * (du0 + du1) + v0, n2, dx, theta * dt,
                           params.u_minus, params.u_plus)
    r2 = poisson.solve_poisson_boltzmann(n2, dx, params.phi_minus, params.phi_plus, initial_guess=r1.phi)
    _check_elliptic(r2, state)
    if info is not None:
        info.flux_left = 0.5 * (fl0 + fl1)
        info.flux_right = 0.5 * (fr0 + fr1)
        info.sponge_mass = sponge.mass(s0 + s1, 0.5 * dt * dx) if sponge is not None else 0.0
        info.elliptic_iterations = r1.iterations + r2.iterations
        info.elliptic_residual = r2.final_residual
    return FluidState(t0 + dt, n2, u2, r2.phi)


def step_twofluid(state: TwoFluidState, params: PhysParamsTwo, grid: Grid1D, dt: float,
                  theta: float = 0.5, info: StepInfo | None = None,
                  sponge: Sponge | None = None) -> TwoFluidState:
    """Advance the ion/electron system by ``dt``; same scheme per species.

    Ions feel ``+phi_x/m_i`` and electrons ``-phi_x/m_e`` per unit mass.

    Raises:
        PositivityError: if either density becomes nonpositive.
    """
    dx = grid.dx
    p = params
    t0 = state.time
    umax = max(float(np.max(np.abs(state.u_i))), float(np.max(np.abs(state.u_e))))
    k4 = _kappa4(dx, umax, p.sound_speed())
    species = (
        (p.m_i, p.T_i, p.mu_i, +1.0),
        (p.m_e, p.T_e, p.mu_e, -1.0),
    )

    def rates(t, n, u, phi, m, T, charge):
        dn, fl, fr = _mass_rhs(n, u, dx, k4)
        du = -u * _central(u, dx) - (T / m) * _central(n, dx) / n + charge * _central(phi, dx) / m
        du[0] = du[-1] = 0.0
        sn, su = _relax(sponge, t, n, u)
        return dn + sn, du + su, fl, fr, sn

    old = ((state.n_i, state.u_i), (state.n_e, state.u_e))
    stage0 = []
    pred = []
    for (n, u), (m, T, mu, q) in zip(old, species):
        dn, du, fl, fr, sn = rates(t0, n, u, state.phi, m, T, q)
        v = (1.0 - theta) * dt * _viscous(u, n, dx, mu / m)
        n1 = n + dt * dn
        _check_positive(n1, state)
        u1 = _implicit_viscous(u + dt * du + v, n1, dx, theta * dt * mu / m, p.u_minus, p.u_plus)
        stage0.append((dn, du, v, fl, fr, sn))
        pred.append((n1, u1))
    phi1 = poisson.solve_poisson_linear(pred[0][0] - pred[1][0], dx, p.phi_minus, p.phi_plus).phi

    new = []
    balance = []
    for (n, u), (n1, u1), (dn0, du0, v0, fl0, fr0, s0), (m, T, mu, q) in zip(old, pred, stage0, species):
        dn1, du1, fl1, fr1, s1 = rates(t0 + dt, n1, u1, phi1, m, T, q)
        n2 = n + 0.5 * dt * (dn0 + dn1)
        _check_positive(n2, state)
        u2 = _implicit_viscous(u + 0.5 * dt * (du0 + du1) + v0, n2, dx, theta * dt * mu / m,
                               p.u_minus, p.u_plus)
        new.append((n2, u2))
        src = sponge.mass(s0 + s1, 0.5 * dt * dx) if sponge is not None else 0.0
        balance.append((0.5 * (fl0 + fl1), 0.5 * (fr0 + fr1), src))
    rep = poisson.solve_poisson_linear(new[0][0] - new[1][0], dx, p.phi_minus, p.phi_plus)
    if info is not None:
        # ion balance; the electron balance telescopes identically
        info.flux_left, info.flux_right, info.sponge_mass = balance[0]
        info.elliptic_iterations = 2
        info.elliptic_residual = rep.final_residual
    return TwoFluidState(t0 + dt, new[0][0], new[0][1], new[1][0], new[1][1], rep.phi)


def _check_positive(n, state):
    if not np.all(np.isfinite(n)):
        raise NumericalError(f"non-finite density after step from t={state.time:.6g}")
    if np.any(n <= 0):
        raise PositivityError(f"density lost positivity after t={state.time:.6g}",
                              time=state.time, state=state)


def _check_elliptic(rep, state):
    if not rep.converged:
        raise NumericalError(f"Poisson-Boltzmann solve failed near t={state.time:.6g} "
                             f"(residual {rep.final_residual:.3e})")


def step(state: State, config: SimConfig, dt: float, info: StepInfo | None = None,
         sponge: Sponge | None = None) -> State:
    if isinstance(state, FluidState):
        return step_onefluid(state, config.params, config.grid, dt, config.viscous_theta, info, sponge)
    return step_twofluid(state, config.params, config.grid, dt, config.viscous_theta, info, sponge)


@dataclass
class Snapshot:
    step: int
    time: float
    report: object = None
    state: State | None = None


@dataclass
class Trajectory:
    """Output-step record of a run.

    ``snapshots`` carries one diagnostics report per output step (and the full
    state when ``keep_states`` is set); ``final_state`` is always kept.
    """

    config: SimConfig
    snapshots: list = field(default_factory=list)
    final_state: State | None = None
    steps: int = 0
    mass_balance_error: float = 0.0

    @property
    def times(self) -> np.ndarray:
        return np.array([s.time for s in self.snapshots])


def _total_mass(state):
    if isinstance(state, FluidState):
        return state.n
    return state.n_i


def run_simulation(config: SimConfig, diagnostics: bool = True, callback=None,
                   max_steps: int | None = None) -> Trajectory:
    """Integrate from 0 to ``t_final``, recording every ``output_stride`` steps.

    ``callback(step, state)`` (if given) is invoked at every output step, e.g.
    to dump full states to disk.

    Raises:
        ValidationError: if the domain is too small for the fan.
        NumericalError: propagated step failures; ``.time`` and ``.state``
            are attached when available.
    """
    from .diagnostics import energy_report

    validate_domain(config)
    state = initial_state(config)
    traj = Trajectory(config)
    dx = config.grid.dx
    params = config.params

    def record(k, st):
        rep = None
        if diagnostics:
            prof = profile_for(params, st.time, config.grid)
            rep = energy_report(st, prof, params, config.grid)
        traj.snapshots.append(Snapshot(k, st.time, rep, st.copy() if config.keep_states else None))
        if callback is not None:
            callback(k, st)

    record(0, state)
    k = 0
    info = StepInfo()
    sponge = make_sponge(config)
    mass_err = 0.0
    t_final = float(config.t_final)
    m0 = trapz(_total_mass(state), dx)
    while state.time < t_final * (1 - 1e-14) and t_final > 0:
        dt = config.dt if config.dt is not None else cfl_dt(state, params, config.grid, config.cfl_number)
        dt = min(dt, t_final - state.time)
        try:
            new = step(state, config, dt, info, sponge)
        except NumericalError as exc:
            if getattr(exc, "time", None) is None:
                exc.time = state.time
                exc.state = state
            raise
        m1 = trapz(_total_mass(new), dx)
        balance = m1 - m0 + dt * (info.flux_right - info.flux_left) - info.sponge_mass
        mass_err = max(mass_err, abs(balance) / max(abs(m0), 1.0))
        m0 = m1
        state = new
        k += 1
        done = state.time >= t_final * (1 - 1e-14)
        if done:
            state.time = t_final
        if k % config.output_stride == 0 or done:
            record(k, state)
        if max_steps is not None and k >= max_steps:
            break
    traj.final_state = state
    traj.steps = k
    traj.mass_balance_error = mass_err
    log.info("run finished: %d steps, t=%.4g", k, state.time)
    return traj
