"""Quadratic Gromov-Wasserstein and entropic GW through the centered dual.

``gw`` and ``egw`` split the cost into a moment term and a minimization over a
bounded matrix ``A`` of transport problems with cost
``-4|x|^2|y|^2 - 32 x^T A y``. The remaining modules hold exact and entropic
transport solvers, a permutation oracle, the one-dimensional study, the
higher-order dual construction, procrustes bounds and the experiment sweeps.
"""

from .core import GwSolution, NotCenteredError, egw, gw, half_width, s1, solve_s2
from .measures import DiscreteMeasure, MeasureFormatError, center, load_measure, save_measure
from .oracle import brute_force_gw_uniform, egw_objective, permutation_plan, quad_objective
from .ot_exact import solve_ot
from .procrustes import wasserstein_procrustes
from .sinkhorn import solve_eot

__version__ = "0.1.0"

__all__ = [
    "DiscreteMeasure",
    "GwSolution",
    "MeasureFormatError",
    "NotCenteredError",
    "brute_force_gw_uniform",
    "center",
    "egw",
    "egw_objective",
    "gw",
    "half_width",
    "load_measure",
    "permutation_plan",
    "quad_objective",
    "s1",
    "save_measure",
    "solve_eot",
    "solve_ot",
    "solve_s2",
    "wasserstein_procrustes",
]
