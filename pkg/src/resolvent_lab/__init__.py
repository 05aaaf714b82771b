"""Simulation and numerical-verification toolkit for a periodic-potential
test particle thermostatted by an ideal gas: exact samplers, trajectory
generators, state-modulated resolvent estimators, deterministic solvers, and
an inequality-verification harness."""

from .model import (ModelParams, Modulator, Payoff, PhaseState, Potential,
                    SeparatrixError, db_inequality_margin,
                    detailed_balance_residual, escape_rate,
                    escape_rate_quadrature, hamiltonian, jump_kernel,
                    levy_density, modulator_eval, regime_classify)
from .curves import (CurveState, curve_measure_density, curve_quadrature,
                     curve_state, critical_levels, fw_escape_rate,
                     fw_jump_kernel, fw_kernel_integral, fw_skeleton_kernel,
                     hat_map, kappa_density, orbit_period, quasi_momentum)
from .sampling import (RandomStream, SamplerError, sample_collision_time,
                       sample_post_collision, sample_post_collision_batch,
                       shell_majorant_rate, thinning_acceptance_prediction)

__version__ = "0.1.0"

__all__ = [
    "ModelParams", "Modulator", "Payoff", "PhaseState", "Potential",
    "SeparatrixError", "db_inequality_margin", "detailed_balance_residual",
    "escape_rate", "escape_rate_quadrature", "hamiltonian", "jump_kernel",
    "levy_density", "modulator_eval", "regime_classify",
    "CurveState", "curve_measure_density", "curve_quadrature", "curve_state",
    "critical_levels", "fw_escape_rate", "fw_jump_kernel",
    "fw_kernel_integral", "fw_skeleton_kernel", "hat_map", "kappa_density",
    "orbit_period", "quasi_momentum",
    "RandomStream", "SamplerError", "sample_collision_time",
    "sample_post_collision", "sample_post_collision_batch",
    "shell_majorant_rate", "thinning_acceptance_prediction",
    "__version__",
]
