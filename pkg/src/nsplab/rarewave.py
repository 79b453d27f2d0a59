"""Smooth approximate rarefaction waves built from the inviscid Burgers equation.

The Burgers solution with tanh initial data is evaluated exactly by solving the
characteristic relation ``x = x0 + t*w0(x0)`` for the foot ``x0``.  All spatial
derivatives come from implicit differentiation of that relation, never from
differencing, so the decay rates of the derivative norms can be measured
cleanly out to late times.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import Grid1D, NumericalError, PhysParamsOne, PhysParamsTwo, ValidationError, lp_norm

_TANH_CLAMP = 40.0
_MAX_ITER = 200


@dataclass(frozen=True)
class BurgersWave:
    """Increasing tanh data ``w0(x) = (w+ + w-)/2 + (w+ - w-)/2 * tanh(eps*x)``."""

    w_minus: float
    w_plus: float
    eps_smooth: float

    def __post_init__(self):
        if not self.w_minus < self.w_plus:
            raise ValidationError("a 2-rarefaction needs w_minus < w_plus")
        if not self.eps_smooth > 0:
            raise ValidationError("eps_smooth must be positive")

    @property
    def delta(self) -> float:
        return self.w_plus - self.w_minus

    def initial(self, x0, order: int = 0):
        """Value of ``w0`` (order 0) or its derivatives up to order 3 at ``x0``."""
        y = self.eps_smooth * np.asarray(x0, dtype=float)
        half = 0.5 * self.delta
        if order == 0:
            # clip guards the bounds against rounding in mid + half*tanh
            return np.clip(0.5 * (self.w_plus + self.w_minus) + half * _tanh(y), self.w_minus, self.w_plus)
        th = _tanh(y)
        s2 = _sech2(y)
        e = self.eps_smooth
        if order == 1:
            return half * e * s2
        if order == 2:
            return -self.delta * e**2 * s2 * th
        if order == 3:
            return -self.delta * e**3 * (s2 * s2 - 2.0 * s2 * th * th)
        raise ValueError("order must be 0..3")


def _tanh(y):
    return np.where(np.abs(y) > _TANH_CLAMP, np.sign(y), np.tanh(np.clip(y, -_TANH_CLAMP, _TANH_CLAMP)))


def _sech2(y):
    # overflow-free form of sech^2
    q = np.exp(-2.0 * np.abs(y))
    return 4.0 * q / (1.0 + q) ** 2


def characteristic_foot(wave: BurgersWave, t: float, x):
    """Solve ``x0 + t*w0(x0) = x`` for ``x0`` (vectorised over ``x``).

    Safeguarded Newton iteration inside the exact bracket
    ``[x - t*w+, x - t*w-]``, falling back to bisection whenever a Newton step
    leaves the bracket or fails to halve the residual.  The map is strictly
    increasing so the root is unique.

    Raises:
        NumericalError: if some point fails to converge in 200 iterations.
    """
    if t < 0:
        raise ValidationError("t must be nonnegative")
    x = np.asarray(x, dtype=float)
    scalar = x.ndim == 0
    x = np.atleast_1d(x)
    if t == 0:
        return float(x[0]) if scalar else x.copy()
    lo = x - t * wave.w_plus
    hi = x - t * wave.w_minus
    # foot of the centred fan: exact outside it, within O(1/eps) inside
    x0 = np.clip(0.0, lo, hi)
    tol = 1e-13 * (1.0 + np.abs(x))
    F_prev = np.full(x.shape, np.inf)
    act = np.arange(x.size)
    for _ in range(_MAX_ITER):
        xa, za = x[act], x0[act]
        F = za + t * wave.initial(za) - xa
        keep = np.abs(F) > tol[act]
        act, F, xa, za = act[keep], F[keep], xa[keep], za[keep]
        if act.size == 0:
            break
        la = np.where(F < 0, za, lo[act])
        ha = np.where(F > 0, za, hi[act])
        lo[act], hi[act] = la, ha
        step = za - F / (1.0 + t * wave.initial(za, 1))
        # bisect when Newton leaves the bracket or fails to halve |F| (breaks 2-cycles)
        bad = ~((step > la) & (step < ha)) | (np.abs(F) > 0.5 * F_prev[act])
        F_prev[act] = np.abs(F)
        new = np.where(bad, 0.5 * (la + ha), step)
        # stagnation at round-off level counts as converged
        scale = 4e-16 * (1.0 + np.abs(za))
        stalled = (np.abs(new - za) <= scale) | (ha - la <= scale)
        x0[act] = np.where(stalled, za, new)
        act = act[~stalled]
        if act.size == 0:
            break
    else:
        raise NumericalError("characteristic solver did not converge in 200 iterations")
    return float(x0[0]) if scalar else x0


def burgers_value(wave: BurgersWave, t: float, x):
    """Exact smooth Burgers solution ``w(t, x)``."""
    return wave.initial(characteristic_foot(wave, t, x))


@dataclass(frozen=True)
class BurgersDerivatives:
    w: np.ndarray
    wx: np.ndarray
    wxx: np.ndarray
    wxxx: np.ndarray

    @property
    def wt(self):
        return -self.w * self.wx


def burgers_derivatives(wave: BurgersWave, t: float, x) -> BurgersDerivatives:
    """Value and first three x-derivatives of the Burgers solution.

    With ``g, h, k`` the derivatives of ``w0`` at the foot and
    ``J = 1/(1 + t g)``: ``w_x = g J``, ``w_xx = h J^3``,
    ``w_xxx = k J^4 - 3 t h^2 J^5``.
    """
    x0 = characteristic_foot(wave, t, x)
    g = wave.initial(x0, 1)
    h = wave.initial(x0, 2)
    k = wave.initial(x0, 3)
    J = 1.0 / (1.0 + t * g)
    return BurgersDerivatives(
        w=wave.initial(x0),
        wx=g * J,
        wxx=h * J**3,
        wxxx=k * J**4 - 3.0 * t * h * h * J**5,
    )


def riemann_fan(wave: BurgersWave, t: float, x):
    """Centred rarefaction fan ``w^R(x/t)``."""
    if not t > 0:
        raise ValidationError("riemann_fan needs t > 0")
    return np.clip(np.asarray(x, dtype=float) / t, wave.w_minus, wave.w_plus)


@dataclass(frozen=True)
class RarefactionProfile:
    """Smooth profile ``[n^r, u^r, phi^r]`` and its x-derivatives at one time."""

    time: float
    grid: Grid1D
    nr: np.ndarray
    ur: np.ndarray
    phir: np.ndarray
    dnr: np.ndarray
    dur: np.ndarray
    dphir: np.ndarray
    d2nr: np.ndarray
    d2ur: np.ndarray
    d2phir: np.ndarray
    d3ur: np.ndarray
    dtnr: np.ndarray
    dtur: np.ndarray


def wave_for(params: PhysParamsOne | PhysParamsTwo) -> BurgersWave:
    """Burgers data ``w = u + c`` matching the far-field states of ``params``."""
    if not params.is_r2():
        raise ValidationError("far-field states do not define a 2-rarefaction (need n_plus > n_minus)")
    c = params.c
    return BurgersWave(params.u_minus + c, params.u_plus + c, params.eps_smooth)


def _profile(params, t: float, grid: Grid1D, phi_coeff: float) -> RarefactionProfile:
    if t < 0:
        raise ValidationError("profile time must be nonnegative")
    c = params.c
    b = burgers_derivatives(wave_for(params), t + 1.0, grid.x)
    ur = b.w - c
    dur, d2ur, d3ur = b.wx, b.wxx, b.wxxx
    nr = params.n_minus * np.exp((ur - params.u_minus) / c)
    q = dur / c
    dnr = nr * q
    d2nr = nr * (d2ur / c + q * q)
    # phi_coeff = -1 for the Boltzmann closure
    log_nr = np.log(nr)
    dtur = b.wt
    return RarefactionProfile(
        time=float(t),
        grid=grid,
        nr=nr,
        ur=ur,
        phir=phi_coeff * log_nr,
        dnr=dnr,
        dur=dur,
        dphir=phi_coeff * q,
        d2nr=d2nr,
        d2ur=d2ur,
        d2phir=phi_coeff * d2ur / c,
        d3ur=d3ur,
        dtnr=nr * dtur / c,
        dtur=dtur,
    )


def profile_onefluid(params: PhysParamsOne, t: float, grid: Grid1D) -> RarefactionProfile:
    """Profile for the Boltzmann-electron model, ``phi^r = -ln n^r``."""
    return _profile(params, t, grid, -1.0)


def profile_twofluid(params: PhysParamsTwo, t: float, grid: Grid1D) -> RarefactionProfile:
    """Profile for the ion/electron model, ``phi^r = phi_coeff * ln n^r``."""
    return _profile(params, t, grid, params.phi_coeff)


def profile_values(params, t: float, x):
    """``(n^r, u^r)`` at arbitrary points, without derivatives."""
    c = params.c
    ur = burgers_value(wave_for(params), t + 1.0, x) - c
    return params.n_minus * np.exp((ur - params.u_minus) / c), ur


def fan_grid(wave: BurgersWave, t: float, margin: float | None = None, dx: float | None = None) -> Grid1D:
    """Grid wide enough to hold the whole smoothed fan at time ``t``."""
    e = wave.eps_smooth
    margin = 40.0 / e if margin is None else margin
    dx = 0.02 / e if dx is None else dx
    return Grid1D.from_spacing(wave.w_minus * t - margin, wave.w_plus * t + margin, dx)


def verify_decay_rates(wave: BurgersWave, p: float, times, time_shift: float = 0.0,
                       grid_for=None) -> dict:
    """Measure ``|d_x w(t + time_shift)|_{L^p}`` over ``times`` and fit its decay.

    ``time_shift=1`` gives the norms of ``d_x u^r`` for a profile.  The slope
    is fitted over the last decade of ``times``; ``C_p`` is the smallest
    constant for which ``C_p * min(delta*eps^(1-1/p), delta^(1/p) t^(-1+1/p))``
    bounds every sample.

    Raises:
        ValidationError: if ``times`` span less than two decades, or a supplied
            grid does not contain the fan.
    """
    from .diagnostics import fit_decay

    times = np.asarray(sorted(times), dtype=float)
    if times[0] <= 0 or times[-1] / times[0] < 100.0 * (1 - 1e-12):
        raise ValidationError("times must be positive and span at least two decades")
    norms = []
    for t in times:
        ts = t + time_shift
        grid = fan_grid(wave, ts) if grid_for is None else grid_for(ts)
        if grid.x_min > wave.w_minus * ts - 20.0 / wave.eps_smooth or grid.x_max < wave.w_plus * ts + 20.0 / wave.eps_smooth:
            raise ValidationError(f"grid too small to contain the fan at t={t}")
        wx = burgers_derivatives(wave, ts, grid.x).wx
        norms.append(lp_norm(wx, grid.dx, p))
    norms = np.array(norms)
    fit = fit_decay(np.column_stack([times, norms]), window=times[-1] / 10.0)
    inv_p = 0.0 if np.isinf(p) else 1.0 / p
    d, e = wave.delta, wave.eps_smooth
    envelope = np.minimum(d * e ** (1.0 - inv_p), d**inv_p * times ** (-1.0 + inv_p))
    return {
        "p": p,
        "times": times,
        "norms": norms,
        "slope": fit["slope"],
        "C_p": float(np.max(norms / envelope)),
        "window": fit["window"],
    }
