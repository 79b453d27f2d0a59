"""Grids, discrete calculus and parameter containers shared by the solvers."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np


class NumericalError(RuntimeError):
    """A numerical procedure failed (non-finite data, divergence, positivity loss)."""


class ValidationError(ValueError):
    """Inputs or configuration violate a documented precondition."""


@dataclass(frozen=True)
class Grid1D:
    """Uniform node-centred mesh on ``[x_min, x_max]`` including both end points."""

    x_min: float
    x_max: float
    n_cells: int

    def __post_init__(self):
        if not (np.isfinite(self.x_min) and np.isfinite(self.x_max)):
            raise ValidationError("grid bounds must be finite")
        if not self.x_min < self.x_max:
            raise ValidationError(f"x_min={self.x_min} must be < x_max={self.x_max}")
        if int(self.n_cells) != self.n_cells or self.n_cells < 8:
            raise ValidationError(f"n_cells must be an integer >= 8, got {self.n_cells}")

    @classmethod
    def from_spacing(cls, x_min: float, x_max: float, dx: float) -> "Grid1D":
        """Grid whose spacing is as close to ``dx`` as the interval allows (never coarser)."""
        n = int(math.ceil((x_max - x_min) / dx - 1e-9)) + 1
        return cls(float(x_min), float(x_max), max(n, 8))

    @property
    def dx(self) -> float:
        return (self.x_max - self.x_min) / (self.n_cells - 1)

    @property
    def x(self) -> np.ndarray:
        return self.x_min + np.arange(self.n_cells) * self.dx

    @property
    def length(self) -> float:
        return self.x_max - self.x_min


def check_field(f, grid: Grid1D | None = None, name: str = "field") -> np.ndarray:
    """Return ``f`` as a float array, raising if it is non-finite or mis-sized."""
    f = np.asarray(f, dtype=float)
    if f.ndim != 1:
        raise ValidationError(f"{name} must be one-dimensional")
    if grid is not None and f.shape[0] != grid.n_cells:
        raise ValidationError(f"{name} has {f.shape[0]} values, grid has {grid.n_cells} nodes")
    if not np.all(np.isfinite(f)):
        raise NumericalError(f"{name} contains non-finite values")
    return f


def ddx(f, dx: float) -> np.ndarray:
    """First derivative: central differences inside, one-sided second order at the ends."""
    f = check_field(f)
    d = np.empty_like(f)
    d[1:-1] = (f[2:] - f[:-2]) / (2.0 * dx)
    d[0] = (-3.0 * f[0] + 4.0 * f[1] - f[2]) / (2.0 * dx)
    d[-1] = (3.0 * f[-1] - 4.0 * f[-2] + f[-3]) / (2.0 * dx)
    return d


def d2dx2(f, dx: float) -> np.ndarray:
    """Second derivative: 3-point stencil inside, 4-point one-sided at the ends."""
    f = check_field(f)
    d = np.empty_like(f)
    d[1:-1] = (f[2:] - 2.0 * f[1:-1] + f[:-2]) / dx**2
    d[0] = (2.0 * f[0] - 5.0 * f[1] + 4.0 * f[2] - f[3]) / dx**2
    d[-1] = (2.0 * f[-1] - 5.0 * f[-2] + 4.0 * f[-3] - f[-4]) / dx**2
    return d


def trapz(f, dx: float) -> float:
    """Trapezoidal integral with compensated summation (order independent)."""
    f = np.asarray(f, dtype=float)
    w = f.copy()
    w[0] *= 0.5
    w[-1] *= 0.5
    return dx * math.fsum(w)


def inner(f, g, dx: float) -> float:
    """L2 inner product ``(f, g)`` by the trapezoidal rule."""
    return trapz(np.asarray(f) * np.asarray(g), dx)


def lp_norm(f, dx: float, p: float = 2.0) -> float:
    """Discrete L^p norm; ``p=np.inf`` gives the max norm.

    Raises:
        ValidationError: if ``p < 1``.
    """
    if not p >= 1:
        raise ValidationError(f"p must be >= 1, got {p}")
    f = check_field(f)
    if np.isinf(p):
        return float(np.max(np.abs(f)))
    return trapz(np.abs(f) ** p, dx) ** (1.0 / p)


@dataclass(frozen=True)
class SobolevReport:
    lhs: float
    rhs: float
    applicable: bool
    holds: bool


def sobolev_sup_check(f, dx: float) -> SobolevReport:
    """Evaluate both sides of ``|f|_inf <= sqrt(2) |f|^(1/2) |f_x|^(1/2)``.

    The inequality is only meaningful for functions that have decayed at the
    truncated boundary; otherwise ``applicable`` is False and ``holds`` is not
    asserted.  The comparison allows a relative slack of ``5*dx`` for the
    discretisation of the norms.
    """
    f = check_field(f)
    lhs = lp_norm(f, dx, np.inf)
    rhs = math.sqrt(2.0) * math.sqrt(lp_norm(f, dx, 2)) * math.sqrt(lp_norm(ddx(f, dx), dx, 2))
    applicable = lhs == 0.0 or max(abs(f[0]), abs(f[-1])) < 0.01 * lhs
    holds = lhs <= rhs * (1.0 + 5.0 * dx) if applicable else True
    return SobolevReport(lhs, rhs, applicable, holds)


@dataclass(frozen=True)
class PhysParamsOne:
    """One-fluid (Boltzmann electron) constants and far-field states."""

    A: float
    n_minus: float
    n_plus: float
    u_minus: float = 0.0
    eps_smooth: float = 0.1

    def __post_init__(self):
        for name in ("A", "n_minus", "n_plus", "eps_smooth"):
            if not getattr(self, name) > 0:
                raise ValidationError(f"{name} must be positive")

    @property
    def c(self) -> float:
        return math.sqrt(self.A + 1.0)

    @property
    def u_plus(self) -> float:
        """Right velocity on the 2-rarefaction curve through the left state."""
        return self.u_minus + self.c * math.log(self.n_plus / self.n_minus)

    @property
    def phi_minus(self) -> float:
        return -math.log(self.n_minus)

    @property
    def phi_plus(self) -> float:
        return -math.log(self.n_plus)

    @property
    def delta_r(self) -> float:
        return abs(self.n_plus - self.n_minus) + abs(self.u_plus - self.u_minus)

    def is_r2(self) -> bool:
        return self.n_plus > self.n_minus and self.u_plus > self.u_minus

    def sound_speed(self) -> float:
        return self.c


@dataclass(frozen=True)
class PhysParamsTwo:
    """Two-fluid (ion/electron) constants and far-field states."""

    m_i: float
    m_e: float
    T_i: float
    T_e: float
    n_minus: float
    n_plus: float
    u_minus: float = 0.0
    eps_smooth: float = 0.1
    mu_i: float = 1.0
    mu_e: float = 1.0

    def __post_init__(self):
        for name in ("m_i", "m_e", "T_i", "T_e", "n_minus", "n_plus", "eps_smooth", "mu_i", "mu_e"):
            if not getattr(self, name) > 0:
                raise ValidationError(f"{name} must be positive")

    @property
    def c(self) -> float:
        return math.sqrt((self.T_i + self.T_e) / (self.m_i + self.m_e))

    @property
    def phi_coeff(self) -> float:
        return (self.T_i * self.m_e - self.T_e * self.m_i) / (self.m_i + self.m_e)

    @property
    def u_plus(self) -> float:
        return self.u_minus + self.c * math.log(self.n_plus / self.n_minus)

    @property
    def phi_minus(self) -> float:
        return self.phi_coeff * math.log(self.n_minus)

    @property
    def phi_plus(self) -> float:
        return self.phi_coeff * math.log(self.n_plus)

    @property
    def delta_r(self) -> float:
        return abs(self.n_plus - self.n_minus) + abs(self.u_plus - self.u_minus)

    def is_r2(self) -> bool:
        return self.n_plus > self.n_minus and self.u_plus > self.u_minus

    def sound_speed(self) -> float:
        # fastest of the mixture and single-species acoustic speeds
        return max(self.c, math.sqrt(self.T_i / self.m_i), math.sqrt(self.T_e / self.m_e))


def r1_curve_velocity(n, n_minus: float, u_minus: float, c: float):
    """Velocity on the 1-rarefaction curve ``u + c ln n = const`` through the left state."""
    return u_minus - c * np.log(np.asarray(n) / n_minus)


def r2_curve_velocity(n, n_minus: float, u_minus: float, c: float):
    """Velocity on the 2-rarefaction curve ``u - c ln n = const`` through the left state."""
    return u_minus + c * np.log(np.asarray(n) / n_minus)
