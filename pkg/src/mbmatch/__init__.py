"""Euclidean minimum bipartite matching: exact solver, dyadic decimation
construction and Monte Carlo checks of its scaling behaviour."""

__version__ = "0.1.0"

from .sampling import Fixed, Poisson, PointCloud, SampleSpec, sample_cloud, sample_pair
from .matching import Matching, brute_force, solve_exact, sorted_match_1d
from .decimation import build_tree, decimation_match, padded_subdivision, verify_single_split
