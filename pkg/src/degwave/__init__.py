"""Interior-degenerate wave equation u_tt - div(|x|^alpha grad u) = chi_omega f.

Submodules: ``geometry`` (domains, grids, control regions), ``spaces``
(weighted norms, Hardy and embedding ratios, energy), ``wavesolver``
(leapfrog forward/backward solves), ``carleman`` (weighted estimates),
``control`` (HUM controls and observability) and ``cli``.
"""

from .control import HUMProblem, HUMSolution, NonConvergenceError, hum_solve, steer_general
from .geometry import Domain, Grid, build_control_region, minimal_time
from .wavesolver import InstabilityError, StatePair, cfl_timestep, solve_backward, solve_forward

__version__ = "0.1.0"

__all__ = [
    "Domain", "Grid", "build_control_region", "minimal_time",
    "StatePair", "InstabilityError", "cfl_timestep", "solve_forward", "solve_backward",
    "HUMProblem", "HUMSolution", "NonConvergenceError", "hum_solve", "steer_general",
]
