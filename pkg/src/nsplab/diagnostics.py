"""Energy functionals, dissipation integrands and convergence metrics.

All functionals are evaluated on perturbations about the smooth profile,
``n~ = n - n^r``, ``u~ = u - u^r``, ``phi~ = phi - phi^r``, where ``phi`` is always
the elliptic solve carried by the state.  Inner products use the trapezoidal
rule; x-derivatives of the state use the second-order stencils of
:mod:`nsplab.core`.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .core import Grid1D, PhysParamsOne, PhysParamsTwo, ValidationError, d2dx2, ddx, inner


def psi_potential(n, nr, A: float):
    """Relative pressure potential ``A * (ln(n/nr) + nr/n - 1)``.

    Equals ``A * int_{nr}^{n} (s - nr)/s^2 ds``; evaluated through
    ``r = (n - nr)/n`` with a series near ``r = 0`` to avoid cancellation.

    Raises:
        ValidationError: for nonpositive ``n`` or ``nr``.
    """
    n = np.asarray(n, dtype=float)
    nr = np.asarray(nr, dtype=float)
    if np.any(n <= 0) or np.any(nr <= 0):
        raise ValidationError("psi_potential needs positive densities")
    r = (n - nr) / n
    small = np.abs(r) < 1e-3
    rs = np.where(small, r, 0.0)
    series = sum(rs**k / k for k in range(2, 9))
    rb = np.where(small, 0.0, r)
    direct = -np.log1p(-rb) - rb
    out = A * np.where(small, series, direct)
    return out if out.ndim else float(out)


def lyapunov_constant(params) -> float:
    """Weight ``C`` on the zero-order functional in the combined Lyapunov functional.

    ``4*max(1, 1/n_-^2)``, raised when needed so that the pointwise quadratic
    form ``C m n u~^2 + 2 m u~ n~_x + n~_x^2/n^2`` stays definite up to
    ``n = 2*n_+`` (definiteness needs ``C > m*n``).
    """
    base = 4.0 * max(1.0, 1.0 / params.n_minus**2)
    m = max(params.m_i, params.m_e) if isinstance(params, PhysParamsTwo) else 1.0
    return max(base, 2.0 * m * params.n_plus)


@dataclass(frozen=True)
class TwoFluidWeights:
    """Positive weights with ``m_i*beta = m_e*gamma``."""

    beta: float
    gamma: float

    @classmethod
    def default(cls, params: PhysParamsTwo) -> "TwoFluidWeights":
        return cls(params.m_e, params.m_i)

    def check(self, params: PhysParamsTwo) -> None:
        if not (self.beta > 0 and self.gamma > 0):
            raise ValidationError("beta and gamma must be positive")
        lhs = params.m_i * self.beta
        if abs(lhs - params.m_e * self.gamma) > 1e-14 * lhs:
            raise ValidationError("weights violate m_i*beta = m_e*gamma")


def _dx(grid):
    return grid.dx


def _perturbation_one(state, profile):
    return state.n - profile.nr, state.u - profile.ur, state.phi - profile.phir


def zero_order_energy(state, profile, params: PhysParamsOne, grid: Grid1D) -> dict:
    """Zero-order functional pieces for the one-fluid model.

    Keys: ``kinetic`` (u~, n u~), ``pressure`` 2(n, psi), ``potential_quad``
    (phi~^2, n^r), ``potential_grad`` |phi~_x|^2, ``potential_cubic``
    -(2/3)(phi~^3, n^r), and ``total``.
    """
    _same_grid(state.n, profile, grid)
    dx = _dx(grid)
    nt, ut, pt = _perturbation_one(state, profile)
    parts = {
        "kinetic": inner(ut, state.n * ut, dx),
        "pressure": 2.0 * inner(state.n, psi_potential(state.n, profile.nr, params.A), dx),
        "potential_quad": inner(pt**2, profile.nr, dx),
        "potential_grad": inner(ddx(pt, dx), ddx(pt, dx), dx),
        "potential_cubic": -2.0 / 3.0 * inner(pt**3, profile.nr, dx),
    }
    parts["total"] = math.fsum(parts.values())
    return parts


def first_order_energy(state, profile, params: PhysParamsOne, grid: Grid1D) -> dict:
    """First-order additions: ``density_grad`` ((n~_x)^2, n^-2), ``cross`` 2(u~, n~_x),
    ``velocity_grad`` (u~_x, u~_x), and ``total``."""
    _same_grid(state.n, profile, grid)
    dx = _dx(grid)
    nt, ut, _ = _perturbation_one(state, profile)
    nx = ddx(nt, dx)
    ux = ddx(ut, dx)
    parts = {
        "density_grad": inner(nx**2, state.n**-2, dx),
        "cross": 2.0 * inner(ut, nx, dx),
        "velocity_grad": inner(ux, ux, dx),
    }
    parts["total"] = math.fsum(parts.values())
    return parts


def lyapunov_onefluid(state, profile, params: PhysParamsOne, grid: Grid1D, C1: float | None = None) -> float:
    """``C1 * zero_order + first_order``, equivalent to the H^1 size of the perturbation."""
    C1 = lyapunov_constant(params) if C1 is None else C1
    return C1 * zero_order_energy(state, profile, params, grid)["total"] + \
        first_order_energy(state, profile, params, grid)["total"]


def dissipation_rates(state, profile, params, grid: Grid1D) -> dict:
    """Dissipation integrands at one instant.

    ``wave_weighted`` is ``(d_x u^r, u~^2 + n~_x^2 + u~_x^2)`` (summed over
    species for two fluids).  ``flat`` is the squared L2 norm of
    ``[n~_x, u~_x, phi~_x, phi~_xx, u~_xx]``; the two-fluid version drops
    ``phi~_x``, whose dissipation is not available there.
    """
    dx = _dx(grid)
    w = profile.dur
    pt = state.phi - profile.phir
    pairs = _species_pairs(state, profile)
    wave = 0.0
    flat = 0.0
    visc = 0.0
    dens = 0.0
    for nt, ut in pairs:
        nx, ux = ddx(nt, dx), ddx(ut, dx)
        uxx = d2dx2(ut, dx)
        wave += inner(w, ut**2 + nx**2 + ux**2, dx)
        visc += inner(ux, ux, dx)
        dens += inner(nx, nx, dx)
        flat += inner(nx, nx, dx) + inner(ux, ux, dx) + inner(uxx, uxx, dx)
    px = ddx(pt, dx)
    pxx = d2dx2(pt, dx)
    pot = inner(pxx, pxx, dx)
    if isinstance(params, PhysParamsOne):
        pot += inner(px, px, dx)
    flat += pot
    return {"wave_weighted": wave, "flat": flat, "viscous": visc, "density": dens, "potential": pot}


def _species_pairs(state, profile):
    if hasattr(state, "n_i"):
        return [(state.n_i - profile.nr, state.u_i - profile.ur),
                (state.n_e - profile.nr, state.u_e - profile.ur)]
    return [(state.n - profile.nr, state.u - profile.ur)]


def twofluid_energy(state, profile, params: PhysParamsTwo, grid: Grid1D,
                    weights: TwoFluidWeights | None = None, C2: float | None = None) -> dict:
    """Two-fluid functional pieces, including the beta/gamma weighted terms.

    ``quad_form`` is ``((sqrt(gamma m_i) u~_i + sqrt(beta m_e) u~_e)^2, n^r u^r_x)
    / (2(beta+gamma))``, which is never negative.  ``half_I0_plus_I6`` is the
    unsplit quadratic expression it was extracted from; it equals
    ``quad_form + density_correction + time_correction``.
    ``cross_beta_gamma`` is the mixed velocity/field term of the Lyapunov
    functional, and ``total`` the whole functional.

    Raises:
        ValidationError: if the weights violate ``m_i*beta = m_e*gamma``.
    """
    weights = TwoFluidWeights.default(params) if weights is None else weights
    weights.check(params)
    C2 = lyapunov_constant(params) if C2 is None else C2
    dx = _dx(grid)
    b, g = weights.beta, weights.gamma
    mi, me = params.m_i, params.m_e
    ur_x = profile.dur
    nti, uti = state.n_i - profile.nr, state.u_i - profile.ur
    nte, ute = state.n_e - profile.nr, state.u_e - profile.ur
    pt = state.phi - profile.phir
    px = ddx(pt, dx)
    s = 2.0 * (b + g)
    quad = inner((math.sqrt(g * mi) * uti + math.sqrt(b * me) * ute) ** 2, profile.nr * ur_x, dx) / s
    full = inner(g * mi * state.n_i * uti**2 + (b * mi * state.n_e + g * me * state.n_i) * uti * ute
                 + b * me * state.n_e * ute**2, ur_x, dx) / s
    dens = inner(g * mi * nti * uti**2 + (b * mi * nte + g * me * nti) * uti * ute
                 + b * me * nte * ute**2, ur_x, dx) / s
    # d_t d_x phi^r = phi_coeff * d_t(u^r_x)/c, with d_t u^r_x = -(u^r + c) u^r_xx - (u^r_x)^2
    c = params.c
    dt_urx = -(profile.ur + c) * profile.d2ur - profile.dur**2
    dtx_phir = params.phi_coeff * dt_urx / c
    tcorr = -inner(b * mi * uti - g * me * ute, dtx_phir * ur_x, dx) / s
    cross = (-C2 * b * mi / (b + g)) * inner(uti, px * ur_x, dx) + (C2 * g * me / (b + g)) * inner(ute, px * ur_x, dx)

    parts = {"kinetic": 0.0, "pressure": 0.0, "first_order": 0.0, "velocity_grad": 0.0}
    for m, T, n, nt, ut in ((mi, params.T_i, state.n_i, nti, uti), (me, params.T_e, state.n_e, nte, ute)):
        nx, ux = ddx(nt, dx), ddx(ut, dx)
        parts["kinetic"] += m * inner(ut, n * ut, dx)
        parts["pressure"] += 2.0 * inner(n, psi_potential(n, profile.nr, T), dx)
        parts["first_order"] += 2.0 * m * inner(ut, nx, dx) + inner(nx**2, n**-2, dx)
        parts["velocity_grad"] += m * inner(ux, ux, dx)
    parts["field_grad"] = inner(px, px, dx)
    parts["cross_beta_gamma"] = cross
    parts["quad_form"] = quad
    parts["half_I0_plus_I6"] = full + tcorr
    parts["density_correction"] = dens
    parts["time_correction"] = tcorr
    parts["zero_order"] = parts["kinetic"] + parts["pressure"] + parts["field_grad"]
    parts["total"] = (parts["first_order"] + parts["velocity_grad"]
                      + C2 * (parts["kinetic"] + parts["pressure"] + parts["field_grad"]) + cross)
    return parts


@dataclass
class EnergyReport:
    """Diagnostics of one snapshot."""

    time: float
    E_zero: float
    E_first: float
    lyapunov: float
    D_visc: float
    D_density: float
    D_potential: float
    D_wave: float
    D_flat: float
    sup_n: float
    sup_u: float
    sup_phi: float
    quasineutral_gap: float
    quad_form: float | None = None
    species_gap: float | None = None
    elliptic_identity: float = 0.0
    extra: dict = field(default_factory=dict)

    @property
    def sup_distance(self) -> float:
        return max(self.sup_n, self.sup_u)


def energy_report(state, profile, params, grid: Grid1D) -> EnergyReport:
    """Evaluate every functional and distance on one snapshot."""
    dx = grid.dx
    diss = dissipation_rates(state, profile, params, grid)
    pt = state.phi - profile.phir
    if isinstance(params, PhysParamsOne):
        z = zero_order_energy(state, profile, params, grid)
        f = first_order_energy(state, profile, params, grid)
        C1 = lyapunov_constant(params)
        # n - e^{-phi} against the discrete phi_xx, interior nodes
        ident = d2dx2(state.phi, dx) - (state.n - np.exp(-state.phi))
        return EnergyReport(
            time=state.time, E_zero=z["total"], E_first=f["total"], lyapunov=C1 * z["total"] + f["total"],
            D_visc=diss["viscous"], D_density=diss["density"], D_potential=diss["potential"],
            D_wave=diss["wave_weighted"], D_flat=diss["flat"],
            sup_n=float(np.max(np.abs(state.n - profile.nr))),
            sup_u=float(np.max(np.abs(state.u - profile.ur))),
            sup_phi=float(np.max(np.abs(pt))),
            quasineutral_gap=float(np.max(np.abs(state.phi + np.log(state.n)))),
            elliptic_identity=float(np.max(np.abs(ident[1:-1]))),
            extra={"zero_order": z, "first_order": f},
        )
    e = twofluid_energy(state, profile, params, grid)
    ident = d2dx2(state.phi, dx) - (state.n_i - state.n_e)
    return EnergyReport(
        time=state.time, E_zero=e["zero_order"], E_first=e["first_order"] + e["velocity_grad"],
        lyapunov=e["total"],
        D_visc=diss["viscous"], D_density=diss["density"], D_potential=diss["potential"],
        D_wave=diss["wave_weighted"], D_flat=diss["flat"],
        sup_n=float(max(np.max(np.abs(state.n_i - profile.nr)), np.max(np.abs(state.n_e - profile.nr)))),
        sup_u=float(max(np.max(np.abs(state.u_i - profile.ur)), np.max(np.abs(state.u_e - profile.ur)))),
        sup_phi=float(np.max(np.abs(ddx(pt, dx)))),
        quasineutral_gap=float(np.max(np.abs(state.phi - params.phi_coeff * np.log(0.5 * (state.n_i + state.n_e))))),
        quad_form=e["quad_form"],
        species_gap=float(np.max(np.abs(state.u_i - state.u_e))),
        elliptic_identity=float(np.max(np.abs(ident[1:-1]))),
        extra={"twofluid": e},
    )


def poisson_identity_gap(state, profile, grid: Grid1D) -> float:
    """Largest interior mismatch between ``phi~_xx`` and the perturbed Poisson-Boltzmann right side.

    Both sides use the discrete second difference of ``phi^r``, so the gap is
    the elliptic-solver residual rather than discretisation error.
    """
    dx = grid.dx
    pt = state.phi - profile.phir
    lhs = d2dx2(pt, dx)
    nt = state.n - profile.nr
    rhs = nt + profile.nr * (1.0 - np.exp(-pt)) - d2dx2(profile.phir, dx)
    return float(np.max(np.abs(lhs - rhs)[1:-1]))


def convergence_report(trajectory) -> list[dict]:
    """Sup-distances to the smooth profile at each snapshot.

    The potential column is ``sup|phi - phi^r|`` for one fluid and
    ``sup|d_x(phi - phi^r)|`` for two fluids.
    """
    snaps = [s for s in trajectory.snapshots if s.report is not None]
    if len(snaps) < 2:
        raise ValidationError("convergence_report needs at least two diagnosed snapshots")
    return [{"t": s.time, "sup_n": s.report.sup_n, "sup_u": s.report.sup_u, "sup_phi": s.report.sup_phi}
            for s in snaps]


def fit_decay(series, window: float | None = None) -> dict:
    """Least-squares power law ``value ~ constant * t**slope`` over a trailing window.

    ``series`` is an (m, 2) array of ``(t, value)``.  ``window`` is the start
    time of the fit (default: the last decade, ``t_max/10``).

    Raises:
        ValidationError: nonpositive values or times, fewer than 10 samples,
            samples spanning less than a decade, or fewer than 3 points in
            the window.
    """
    a = np.asarray(series, dtype=float)
    t, v = a[:, 0], a[:, 1]
    if np.any(t <= 0) or np.any(v <= 0):
        raise ValidationError("fit_decay needs positive times and values")
    if len(t) < 10 or t.max() < 10.0 * t.min() * (1 - 1e-12):
        raise ValidationError("fit_decay needs at least 10 samples spanning a decade")
    start = t.max() / 10.0 if window is None else window
    sel = t >= start * (1 - 1e-12)
    if sel.sum() < 3:
        raise ValidationError("fewer than 3 samples in the fit window")
    slope, icept = np.polyfit(np.log(t[sel]), np.log(v[sel]), 1)
    return {"slope": float(slope), "constant": float(math.exp(icept)),
            "window": (float(t[sel].min()), float(t[sel].max()))}


def envelope_nonincreasing(times, values, t_start: float, n_blocks: int = 10, slack: float = 0.05) -> dict:
    """Block-maximum monotonicity test.

    ``[t_start, t_end]`` is cut into ``n_blocks`` equal windows; the test
    passes when each window's maximum is at most ``(1 + slack)`` times the
    previous window's maximum.  This is an operational stand-in for
    "non-increasing up to small additive drift".
    """
    t = np.asarray(times)
    v = np.asarray(values)
    edges = np.linspace(t_start, t.max(), n_blocks + 1)
    maxima = []
    for lo, hi in zip(edges[:-1], edges[1:]):
        sel = (t >= lo) & (t <= hi)
        if sel.any():
            maxima.append(float(v[sel].max()))
    ratios = [b / a for a, b in zip(maxima[:-1], maxima[1:]) if a > 0]
    worst = max(ratios) if ratios else 0.0
    return {"block_maxima": maxima, "worst_ratio": worst, "passes": worst <= 1.0 + slack}


def _same_grid(f, profile, grid):
    if np.shape(f)[0] != grid.n_cells or profile.nr.shape[0] != grid.n_cells:
        raise ValidationError("state, profile and grid sizes differ")
