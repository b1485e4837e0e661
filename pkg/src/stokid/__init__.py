"""Sparse identification of stochastic dynamics from trajectory data.

Simulate overdamped Langevin and Ito dynamics, estimate Kramers-Moyal
drift and diffusion coefficients, select sparse dictionary expansions by
stepwise regression with cross validation, learn free energies and validate
learned dynamics with Markov state models.
"""

__version__ = "0.1.0"

from .basis import Dictionary, Expansion, builtin, evaluate, evaluate_gradient, parse_dictionary
from .kramers_moyal import assemble_problem, bin_series, linear_increments, quadratic_increments
from .simulate import SimConfig, double_well, lemon_slice, simulate_ito, simulate_overdamped
from .ssr import CvConfig, cross_validate, fit, least_squares, select_model, ssr_path
from .trajectory import Trajectory, load_trajectory, project, save_trajectory

__all__ = [
    "CvConfig", "Dictionary", "Expansion", "SimConfig", "Trajectory",
    "assemble_problem", "bin_series", "builtin", "cross_validate", "double_well",
    "evaluate", "evaluate_gradient", "fit", "least_squares", "lemon_slice",
    "linear_increments", "load_trajectory", "parse_dictionary", "project",
    "quadratic_increments", "save_trajectory", "select_model", "simulate_ito",
    "simulate_overdamped", "ssr_path",
]
