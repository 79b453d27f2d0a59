"""Fourier-mode analysis of the one-fluid system linearised about ``[n, u, phi] = [1, 0, 0]``.

For frequency ``xi`` the linear system is ``s' = M s`` with
``M = [[0, -i xi], [-i xi sigma, -xi^2]]`` and ``a = eps xi^2 + 1``.  Two
density coefficients are supported: ``sigma = A + 1/a`` (``literal_mode=False``,
the value the energy identity requires) and ``sigma = a`` (``literal_mode=True``).
"""

from __future__ import annotations

import cmath
import math
from dataclasses import dataclass, replace

import numpy as np

from .core import ValidationError

_DEGENERATE = 1e-8


@dataclass(frozen=True)
class SpectralMode:
    xi: float
    eps: float
    A: float
    literal_mode: bool
    a: float
    sigma: float
    lambda_plus: complex | None = None
    lambda_minus: complex | None = None
    P_plus: np.ndarray | None = None
    P_minus: np.ndarray | None = None
    degenerate: bool = False

    @property
    def M(self) -> np.ndarray:
        xi = self.xi
        return np.array([[0.0, -1j * xi], [-1j * xi * self.sigma, -xi * xi]], dtype=complex)

    @property
    def coefficient_mode(self) -> str:
        return "literal" if self.literal_mode else "consistent"


def mode_coefficients(xi: float, eps: float = 1.0, A: float = 1.0, literal_mode: bool = False) -> SpectralMode:
    """``a(xi)`` and ``sigma(xi)`` for one mode; eigen-data left empty."""
    if not eps > 0:
        raise ValidationError("eps must be positive")
    if not A > 0:
        raise ValidationError("A must be positive")
    a = eps * xi * xi + 1.0
    sigma = a if literal_mode else A + 1.0 / a
    return SpectralMode(float(xi), float(eps), float(A), bool(literal_mode), a, sigma)


def eigensystem(mode: SpectralMode) -> SpectralMode:
    """Roots of ``lambda^2 + xi^2 lambda + xi^2 sigma = 0`` and the spectral projections.

    ``lambda_plus`` has the larger real part (ties: positive imaginary part).
    Real roots are formed without cancellation (the small one via Vieta).
    When ``|lambda_+ - lambda_-| < 1e-8 xi^2`` (or ``xi = 0``) the mode is flagged
    degenerate and the projections are left as None.
    """
    x2 = mode.xi * mode.xi
    disc = x2 * x2 - 4.0 * x2 * mode.sigma
    if disc >= 0:
        big = -0.5 * (x2 + math.sqrt(disc))
        small = x2 * mode.sigma / big if big != 0 else 0.0
        lp, lm = complex(small), complex(big)
    else:
        im = 0.5 * math.sqrt(-disc)
        lp, lm = complex(-0.5 * x2, im), complex(-0.5 * x2, -im)
    degenerate = x2 == 0 or abs(lp - lm) < _DEGENERATE * x2
    Pp = Pm = None
    if not degenerate:
        M = mode.M
        I = np.eye(2)
        Pp = (M - lm * I) / (lp - lm)
        Pm = (M - lp * I) / (lm - lp)
    return replace(mode, lambda_plus=lp, lambda_minus=lm, P_plus=Pp, P_minus=Pm, degenerate=degenerate)


def _sinhc(z: complex) -> complex:
    # sinh(z)/z by its Taylor series, for |z| <= 0.5
    term = 1.0 + 0j
    total = term
    z2 = z * z
    for k in range(1, 15):
        term *= z2 / ((2 * k) * (2 * k + 1))
        total += term
    return total


def greens_matrix(mode: SpectralMode, t: float) -> np.ndarray:
    """Propagator ``G(t) = exp(t M)`` of one mode.

    Evaluated as ``e^{mt} [cosh(dt) I + (sinh(dt)/d)(M - m I)]`` with
    ``m, d`` the half-sum and half-difference of the eigenvalues.  The sinh
    quotient switches to its series for ``|d t| < 1/2``, which covers the
    double-root (Jordan) limit ``e^{lambda t}(I + t(M - lambda I))`` without
    loss of precision.  ``G(0)`` is the identity exactly.
    """
    if t < 0:
        raise ValidationError("t must be nonnegative")
    if mode.lambda_plus is None:
        mode = eigensystem(mode)
    lp, lm = mode.lambda_plus, mode.lambda_minus
    m = 0.5 * (lp + lm)
    d = 0.5 * (lp - lm)
    z = d * t
    ep, em = cmath.exp(lp * t), cmath.exp(lm * t)
    ch = 0.5 * (ep + em)
    if abs(z) < 0.5:
        sh = cmath.exp(m * t) * t * _sinhc(z)
    else:
        sh = (ep - em) / (2.0 * d)
    return ch * np.eye(2, dtype=complex) + sh * (mode.M - m * np.eye(2))


def mode_energy(n_hat: complex, u_hat: complex, mode: SpectralMode, kappa: float = 0.05) -> dict:
    """Energy ``E`` with cross term and its dissipation ``D`` for one mode.

    ``E = sigma|n|^2 + |u|^2 + kappa Re(i xi n conj(u))/(1 + xi^2)`` and
    ``D = xi^2 |u|^2 + xi^2 sigma |n|^2/(1 + xi^2)``.

    Raises:
        ValidationError: ``kappa`` outside ``[0, 0.1]`` or too large for
            ``E`` to be positive definite at this mode.
    """
    if not 0 <= kappa <= 0.1:
        raise ValidationError("kappa must lie in [0, 0.1]")
    xi, s = mode.xi, mode.sigma
    w = 1.0 + xi * xi
    if (kappa * xi / w) ** 2 >= 4.0 * s:
        raise ValidationError("kappa too large: energy not positive definite")
    n2 = abs(n_hat) ** 2
    u2 = abs(u_hat) ** 2
    cross = (1j * xi * n_hat * np.conj(u_hat)).real
    return {
        "E": s * n2 + u2 + kappa * cross / w,
        "D": xi * xi * u2 + xi * xi * s * n2 / w,
    }


def decay_rate(mode: SpectralMode, kappa: float = 0.05, window: float | None = None,
               samples: int = 400, initial=(1.0, 0.0)) -> float:
    """Exponential decay rate of ``E`` along the exact propagator.

    Least-squares slope of ``log E`` over ``[0, window]``; the default window
    ``20 (1 + xi^2)/xi^2`` spans many e-folds at every frequency.

    Raises:
        ValidationError: for ``xi = 0`` (no decay).
    """
    if mode.xi == 0:
        raise ValidationError("xi = 0 does not decay")
    if mode.lambda_plus is None:
        mode = eigensystem(mode)
    x2 = mode.xi**2
    T = 20.0 * (1.0 + x2) / x2 if window is None else window
    ts = np.linspace(0.0, T, samples)
    s0 = np.asarray(initial, dtype=complex)
    E = []
    for t in ts:
        s = greens_matrix(mode, float(t)) @ s0
        E.append(mode_energy(s[0], s[1], mode, kappa)["E"])
    slope = np.polyfit(ts, np.log(E), 1)[0]
    return float(-slope)


def linearized_consistency(modes, amplitude: float = 1e-4, n_cells: int = 256, t_final: float = 10.0,
                           dt: float = 1e-3, A: float = 1.0, eps: float = 1.0,
                           sample_every: int = 100) -> dict:
    """Compare a small-amplitude nonlinear periodic run with the exact mode propagators.

    The nonlinear one-fluid equations are integrated on ``[0, 2 pi)`` with
    spectral derivatives: Heun for transport, pressure and field terms,
    Crank-Nicolson for ``u_xx``, and the Poisson equation linearised about
    ``phi = 0`` (``eps phi'' = (n - 1) + phi``) solved mode by mode.  The
    initial data is ``n = 1 + amplitude * sum_k cos(k x)`` over ``modes``,
    ``u = 0``.

    Returns per retained wavenumber ``k <= n_cells/8`` the largest deviation
    ``|s_k(t) - G(t, k) s_k(0)|`` over the sampled times, divided by
    ``amplitude``, plus ``"max"`` over all of them.

    Raises:
        ValidationError: requested wavenumbers not integers in
            ``[1, n_cells/8]``.
    """
    kmax = n_cells // 8
    modes = [int(k) for k in modes]
    if any(k < 1 or k > kmax for k in modes) or any(k != float(m) for k, m in zip(modes, modes)):
        raise ValidationError(f"modes must be integers in [1, {kmax}] to avoid aliasing")
    N = n_cells
    x = 2.0 * math.pi * np.arange(N) / N
    k = np.fft.rfftfreq(N, d=1.0 / N)
    ik = 1j * k
    ik[-1] = 0.0  # Nyquist derivative of a real field
    lap = -k * k
    half = 0.5 * dt * lap

    n = 1.0 + amplitude * sum(np.cos(m * x) for m in modes) if amplitude > 0 else np.ones(N)
    u = np.zeros(N)

    def deriv(fh):
        return np.fft.irfft(ik * fh, N)

    def explicit(n, u):
        nh, uh = np.fft.rfft(n), np.fft.rfft(u)
        phih = -nh / (1.0 + eps * k * k)
        phih[0] = 0.0
        ux = deriv(uh)
        uxx = np.fft.irfft(lap * uh, N)
        dn = -deriv(np.fft.rfft(n * u))
        du = -u * ux - A * deriv(nh) / n + deriv(phih) + (1.0 / n - 1.0) * uxx
        return dn, du

    def cn(rhs, uh0):
        # (1 - dt/2 L) u1 = rhs + dt/2 L u0
        return np.fft.irfft((np.fft.rfft(rhs) + half * uh0) / (1.0 - half), N)

    def spectrum(n, u):
        return np.fft.rfft(n - 1.0)[: kmax + 1] / N, np.fft.rfft(u)[: kmax + 1] / N

    n0h, u0h = spectrum(n, u)
    props = {int(kk): eigensystem(mode_coefficients(float(kk), eps, A)) for kk in range(kmax + 1)}
    err = np.zeros(kmax + 1)
    steps = int(round(t_final / dt))
    for step in range(1, steps + 1):
        dn0, du0 = explicit(n, u)
        uh = np.fft.rfft(u)
        n1 = n + dt * dn0
        u1 = cn(u + dt * du0, uh)
        dn1, du1 = explicit(n1, u1)
        n = n + 0.5 * dt * (dn0 + dn1)
        u = cn(u + 0.5 * dt * (du0 + du1), uh)
        if step % sample_every == 0 or step == steps:
            t = step * dt
            nh, uh_ = spectrum(n, u)
            for kk in range(1, kmax + 1):
                pred = greens_matrix(props[kk], t) @ np.array([n0h[kk], u0h[kk]])
                e = math.hypot(abs(nh[kk] - pred[0]), abs(uh_[kk] - pred[1]))
                err[kk] = max(err[kk], e)
    scale = 0.5 * amplitude if amplitude > 0 else 1.0  # |rfft(cos)|/N = 1/2
    out = {int(kk): float(err[kk] / scale) for kk in range(1, kmax + 1)}
    out["max"] = max(out.values()) if out else 0.0
    return out
