"""Dirichlet elliptic solves for the electrostatic potential.

Two problems are handled on the truncated domain:

* the Poisson-Boltzmann equation ``phi'' = n - exp(-phi)`` (one-fluid), by a
  damped Newton iteration, and
* the linear Poisson equation ``phi'' = rhs`` (two-fluid).

Both discretise with the 3-point stencil and reduce to tridiagonal systems.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg

from .core import NumericalError, ValidationError, check_field

log = logging.getLogger(__name__)

_EPS = np.finfo(float).eps


@dataclass
class EllipticSolveReport:
    phi: np.ndarray
    iterations: int
    final_residual: float
    converged: bool = True
    residual_history: list = field(default_factory=list)
    boundary_residual: float = 0.0


def tridiag_solve(lower, diag, upper, rhs) -> np.ndarray:
    """Solve a tridiagonal system.

    ``lower[i]`` multiplies ``x[i-1]`` in row ``i`` (``lower[0]`` unused) and
    ``upper[i]`` multiplies ``x[i+1]`` (``upper[-1]`` unused), so all four
    arrays have the same length.  Backed by LAPACK's banded solver.

    Raises:
        NumericalError: on a zero pivot (singular matrix).
    """
    diag = np.asarray(diag, dtype=float)
    n = diag.shape[0]
    ab = np.zeros((3, n))
    ab[0, 1:] = np.asarray(upper, dtype=float)[:-1]
    ab[1] = diag
    ab[2, :-1] = np.asarray(lower, dtype=float)[1:]
    try:
        x = scipy.linalg.solve_banded((1, 1), ab, np.asarray(rhs, dtype=float), check_finite=False)
    except np.linalg.LinAlgError as exc:
        raise NumericalError(f"tridiagonal solve hit a zero pivot: {exc}") from exc
    return x


def thomas(lower, diag, upper, rhs) -> np.ndarray:
    """Plain Thomas elimination; same conventions as :func:`tridiag_solve`."""
    a = np.asarray(lower, dtype=float)
    b = np.array(diag, dtype=float)
    c = np.asarray(upper, dtype=float)
    d = np.array(rhs, dtype=float)
    n = b.shape[0]
    cp = np.empty(n)
    for i in range(n):
        if i > 0:
            m = a[i] / b[i - 1]
            b[i] -= m * cp[i - 1]
            d[i] -= m * d[i - 1]
        if b[i] == 0.0:
            raise NumericalError(f"zero pivot in row {i}")
        cp[i] = c[i] if i < n - 1 else 0.0
    x = np.empty(n)
    x[-1] = d[-1] / b[-1]
    for i in range(n - 2, -1, -1):
        x[i] = (d[i] - cp[i] * x[i + 1]) / b[i]
    return x


def _laplacian(phi, dx):
    out = np.zeros_like(phi)
    out[1:-1] = (phi[2:] - 2.0 * phi[1:-1] + phi[:-2]) / dx**2
    return out


def _pb_residual(phi, n, dx):
    r = _laplacian(phi, dx) - n + np.exp(-phi)
    r[0] = r[-1] = 0.0
    return r


def _roundoff_floor(phi, n, dx):
    # attainable residual: stencil cancellation dominates at small dx
    scale = 4.0 * np.max(np.abs(phi)) / dx**2 + np.max(np.abs(n)) + np.max(np.exp(-phi))
    return 16.0 * _EPS * scale


def solve_poisson_boltzmann(n, dx: float, phi_bc_left: float, phi_bc_right: float,
                            initial_guess=None, max_iter: int = 50,
                            check_positive: bool = True) -> EllipticSolveReport:
    """Solve ``phi'' - n + exp(-phi) = 0`` with Dirichlet end values.

    Damped Newton: each step solves the tridiagonal Jacobian system (diagonal
    ``-2/dx^2 - exp(-phi_i)``, always negative) and halves the step until the
    max-norm residual decreases.  Converged when the residual is below
    ``1e-12 * (1 + |n|_inf)`` or, on fine grids, the round-off floor of the
    stencil.  The default starting guess is ``-ln n``.  ``iterations`` counts
    the iterates examined, so an already converged guess reports 1.

    Raises:
        ValidationError: if ``check_positive`` and some ``n <= 0``.
        NumericalError: non-finite input or boundary data.
    """
    n = check_field(n, name="n")
    if check_positive and np.any(n <= 0):
        raise ValidationError("density must be positive for the Poisson-Boltzmann solve")
    if not (np.isfinite(phi_bc_left) and np.isfinite(phi_bc_right)):
        raise NumericalError("non-finite boundary values")
    if initial_guess is None:
        phi = -np.log(n) if np.all(n > 0) else np.zeros_like(n)
    else:
        phi = check_field(initial_guess, name="initial_guess").copy()
    phi[0], phi[-1] = phi_bc_left, phi_bc_right
    N = n.shape[0]
    tol_abs = 1e-12 * (1.0 + np.max(np.abs(n)))
    inv2 = 1.0 / dx**2
    lo = np.full(N, inv2)
    up = np.full(N, inv2)
    lo[0] = up[0] = lo[-1] = up[-1] = 0.0
    r = _pb_residual(phi, n, dx)
    res = float(np.max(np.abs(r)))
    history = [res]
    converged = False
    while True:
        tol = max(tol_abs, _roundoff_floor(phi, n, dx))
        if res <= tol:
            converged = True
            break
        if len(history) > max_iter:
            break
        diag = -2.0 * inv2 - np.exp(-phi)
        diag[0] = diag[-1] = 1.0
        delta = tridiag_solve(lo, diag, up, -r)
        step = 1.0
        while True:
            trial = phi + step * delta
            r_trial = _pb_residual(trial, n, dx)
            res_trial = float(np.max(np.abs(r_trial)))
            if res_trial < res or step <= 2.0**-20:
                break
            step *= 0.5
        if res_trial >= res:
            # no representable improvement left
            converged = res <= 100.0 * tol
            break
        phi, r, res = trial, r_trial, res_trial
        history.append(res)
    if not converged:
        log.warning("Poisson-Boltzmann Newton stalled at residual %.3e", res)
    bres = float(max(abs(r[1]), abs(r[-2]))) if N > 2 else 0.0
    return EllipticSolveReport(phi, len(history), res, converged, history, bres)


def solve_poisson_linear(rhs, dx: float, phi_bc_left: float, phi_bc_right: float) -> EllipticSolveReport:
    """Solve ``phi'' = rhs`` with Dirichlet end values (one tridiagonal solve)."""
    rhs = check_field(rhs, name="rhs")
    if not (np.isfinite(phi_bc_left) and np.isfinite(phi_bc_right)):
        raise NumericalError("non-finite boundary values")
    N = rhs.shape[0]
    inv2 = 1.0 / dx**2
    lower = np.full(N, inv2)
    upper = np.full(N, inv2)
    diag = np.full(N, -2.0 * inv2)
    diag[0] = diag[-1] = 1.0
    lower[0] = upper[0] = lower[-1] = upper[-1] = 0.0
    b = rhs.copy()
    b[0], b[-1] = phi_bc_left, phi_bc_right
    phi = tridiag_solve(lower, diag, upper, b)
    r = _laplacian(phi, dx) - rhs
    r[0] = r[-1] = 0.0
    res = float(np.max(np.abs(r)))
    return EllipticSolveReport(phi, 1, res, True, [res], float(max(abs(r[1]), abs(r[-2]))))
