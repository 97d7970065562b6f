"""Multi-cut Benders decomposition with QUBO-based cut selection."""

from .benders import BendersConfig, BendersResult, MixedProblem, run_benders, solve_direct
from .errors import BendersError

__all__ = ["BendersConfig", "BendersResult", "BendersError", "MixedProblem", "run_benders",
           "solve_direct"]
__version__ = "0.1.0"
