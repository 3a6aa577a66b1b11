"""H2-based vulnerability analysis and edge protection for bilinear networks."""

__version__ = '0.1.0'

from .errors import *  # noqa: F401,F403
from .graphmodel import (AttackSet, BilinearDigraph, BilinearSystem, Edge,
                         assemble_system, elementary_coupling, load_graph_spec,
                         new_digraph, ring_digraph)
from .gramian import (GramianReport, assumption1_check,
                      solve_generalized_direct, solve_generalized_fixed_point,
                      solve_linear_lyapunov, spectral_solvability_check,
                      volterra_series_gramian)
from .robustness import (RankUpdateRho, RhoCache, h2_norm, rho,
                         subset_lattice, verify_monotonicity,
                         verify_supermodularity)
from .selection import (brute_force_min, gap_table, greedy_min, protect,
                        randomized_greedy_max)
from .simulate import (integrate, kernel_energy_truncated, monte_carlo_energy)
