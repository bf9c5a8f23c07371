"""Numerical solver and verification lab for stationary first-order
mean-field games with quadratic Hamiltonian on the flat torus."""

__version__ = "0.1.0"

from .grid import GridField, TorusGrid, integrate, norms
from .model import Coupling, MFGModel, Potential, Regularization
from .solver import DiscountedSolution, continuation_solve, newton_solve
from .corrector import ErgodicTriple, extrapolate_ergodic, solve_limit_corrector
from .closed_form import candidate_catalog, example_bbb, example_exlp
from .selection import run_selection_experiment, select_minimizer, selection_functional

__all__ = [
    "__version__",
    "GridField", "TorusGrid", "integrate", "norms",
    "Coupling", "MFGModel", "Potential", "Regularization",
    "DiscountedSolution", "continuation_solve", "newton_solve",
    "ErgodicTriple", "extrapolate_ergodic", "solve_limit_corrector",
    "candidate_catalog", "example_bbb", "example_exlp",
    "run_selection_experiment", "select_minimizer", "selection_functional",
]
