"""Causal structure learning benchmark suite.

Seven graph-recovery algorithms behind one learn() interface, simulated
SEM data generators, the mixed-graph SHD metric, and a hyperparameter
sweep harness with BEST/WORST/DEFAULT/SIM_MEAN selection analysis.
"""

from .graph import Graph, GraphKind, WeightedAdjacency
from .metrics import shd
from .rng import Rng, derive_seed
from .sem import Dataset, SemSpec

__version__ = "0.1.0"

__all__ = [
    "Graph",
    "GraphKind",
    "WeightedAdjacency",
    "Dataset",
    "SemSpec",
    "Rng",
    "derive_seed",
    "shd",
    "__version__",
]
