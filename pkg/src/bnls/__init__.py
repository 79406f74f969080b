"""Ground states of the fourth-order NLS on waveguide manifolds R^d x T^n."""

__version__ = "0.1.0"

from .errors import (
    BNLSError, ConfigError, Diverged, InconclusiveBound, NoBracket, NonFinite, NumericalFailure, TailEscape,
    Unconverged,
)
from .grid import DiffNorms, Field, Grid, diff_norms, h2_norm, l2_sq, lp_norm, make_grid
from .functionals import (
    EnergyBreakdown, ModelParams, Problem, QuadraticForm, el_residual, energy, energy_lambda, energy_tau, evaluate,
    hat_energy, mass, multiplier_estimate, pohozaev_residual,
)
from .minimizer import GroundState, SolveOptions, flat_reference, solve_ground_state, solve_hat_ground_state
from .scalings import ScalingMap, apply_scaling, verify_scaling_identity
from .testfunctions import build_psi, build_rho, mollify, upper_bound_report
from .thresholds import (
    SweepRecord, ThresholdReport, find_c0, find_cminus, find_cplus, find_lambda_star, find_tau_star, sweep_mass,
)
from .flow import FlowOptions, Trajectory, orbital_distance, propagate, stability_experiment

__all__ = [name for name in dir() if not name.startswith("_")]
