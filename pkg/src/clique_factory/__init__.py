"""Clique factors of balanced multipartite graphs above the proportional minimum-degree threshold."""
from .errors import CertifiedFailure, CliqueFactoryError
from .graph import (BipartiteView, MultipartiteGraph, density, induced_cluster_subgraph,
                    min_proportion_bound, proportional_min_degree)

__version__ = "0.1.0"

__all__ = [
    "BipartiteView", "CertifiedFailure", "CliqueFactoryError", "MultipartiteGraph",
    "density", "induced_cluster_subgraph", "min_proportion_bound", "proportional_min_degree",
    "__version__",
]
