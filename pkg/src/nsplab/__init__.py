"""Simulation laboratory for the one-dimensional Navier-Stokes-Poisson equations near rarefaction waves."""

from .core import (Grid1D, NumericalError, PhysParamsOne, PhysParamsTwo, ValidationError, d2dx2, ddx,
                   lp_norm, sobolev_sup_check)
from .rarewave import (BurgersWave, RarefactionProfile, burgers_derivatives, burgers_value,
                       profile_onefluid, profile_twofluid, riemann_fan, verify_decay_rates)
from .sim import (FluidState, Perturbation, PositivityError, SimConfig, TwoFluidState, initial_state,
                  run_simulation, step_onefluid, step_twofluid)

__all__ = [
    "BurgersWave", "FluidState", "Grid1D", "NumericalError", "Perturbation", "PhysParamsOne",
    "PhysParamsTwo", "PositivityError", "RarefactionProfile", "SimConfig", "TwoFluidState",
    "ValidationError", "burgers_derivatives", "burgers_value", "d2dx2", "ddx", "initial_state",
    "lp_norm", "profile_onefluid", "profile_twofluid", "riemann_fan", "run_simulation",
    "sobolev_sup_check", "step_onefluid", "step_twofluid", "verify_decay_rates",
]
