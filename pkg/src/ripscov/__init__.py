"""Volume power functionals of random Vietoris-Rips complexes.

Simulation of the functionals on Poisson point clouds, Monte Carlo moment
tables, assembly of the asymptotic covariance matrices in every density
regime, their closed-form decompositions and bounds, and cross-checks of
formula against simulation.
"""

from .covariance import (AdmissibleSequence, CovarianceModel, Regime,
                         assemble_covariance, branch_sum_gap, validate_sequence)
from .functionals import (FunctionalSpec, evaluate_vector, f_vector, h_functional,
                          normalizing_constant, simplex_volume, volume_power)
from .geometry import (PointCloud, RipsComplex, Window, brute_force_simplices,
                       build_neighbor_graph, enumerate_simplices, sample_poisson)
from .moments import (MomentEstimate, MomentKey, MomentTable, estimate_cross_moment,
                      estimate_single_moment, moment_upper_bound, unit_ball_volume)

__version__ = "0.1.0"

__all__ = [
    "AdmissibleSequence", "CovarianceModel", "FunctionalSpec", "MomentEstimate",
    "MomentKey", "MomentTable", "PointCloud", "Regime", "RipsComplex", "Window",
    "assemble_covariance", "branch_sum_gap", "brute_force_simplices",
    "build_neighbor_graph", "enumerate_simplices", "estimate_cross_moment",
    "estimate_single_moment", "evaluate_vector", "f_vector", "h_functional",
    "moment_upper_bound", "normalizing_constant", "sample_poisson",
    "simplex_volume", "unit_ball_volume", "validate_sequence", "volume_power",
    "__version__",
]
