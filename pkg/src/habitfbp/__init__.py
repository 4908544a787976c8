"""Optimal consumption and investment with habit formation and an S-shaped utility.

The free boundary problem is solved through its dual ODE by shooting, then
inverted to the primal value function and feedback policies. A
finite-difference policy-iteration solver and a dense candidate scan serve
as independent checks; a Monte Carlo module simulates the optimal paths.
"""

from ._numerics import SolverError
from .dual import DualSolution, MarketParams, SolverControls, shoot_y0, solve, solve_roots
from .fd_oracle import FdGridConfig, solve_fd
from .primal import MertonBenchmark, PrimalSolution, merton
from .simulate import PolicyTable, SimConfig, simulate, transversality
from .utility import FAMILIES, Envelope, UtilitySpec, concavify

__version__ = "0.1.0"

__all__ = [
    "FAMILIES",
    "DualSolution",
    "Envelope",
    "FdGridConfig",
    "MarketParams",
    "MertonBenchmark",
    "PolicyTable",
    "PrimalSolution",
    "SimConfig",
    "SolverControls",
    "SolverError",
    "UtilitySpec",
    "concavify",
    "merton",
    "shoot_y0",
    "simulate",
    "solve",
    "solve_fd",
    "solve_roots",
    "transversality",
]
