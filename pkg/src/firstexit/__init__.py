"""Exit-time analysis for randomly perturbed dynamical systems.

Builds diffusion approximations of jump models, solves the mean exit time
and exit-time distribution on box domains with P1 finite elements, and
cross-checks against direct Euler-Maruyama simulation.
"""

__version__ = "0.1.0"

from .models import SdeModel, TransitionTable, builtin_model, builtin_names
from .meshing import BoxDomain, mesh_box
from .solvers import mean_exit_time, survival_function

__all__ = [
    "SdeModel",
    "TransitionTable",
    "builtin_model",
    "builtin_names",
    "BoxDomain",
    "mesh_box",
    "mean_exit_time",
    "survival_function",
    "__version__",
]
