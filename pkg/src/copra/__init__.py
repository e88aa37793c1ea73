"""Cache/refresh/recommendation scheduling toolkit.

Joint optimization of what an edge cache stores, how often entries are
refreshed (their age drives the serving cost), and which cached related
contents to recommend on misses.  Ships a greedy baseline, a Lagrangian
decomposition solver with column generation that also certifies a lower
bound, exact enumeration oracles for small instances, and a benchmark
CLI.
"""

from .model import (
    CachePlan,
    Instance,
    RecommendationColumn,
    Solution,
    best_recommendation_column,
    check_feasibility,
    download_cost,
    miss_probability,
    recommendation_cost,
    total_cost,
    validate_instance,
)

__all__ = [
    "CachePlan",
    "Instance",
    "RecommendationColumn",
    "Solution",
    "best_recommendation_column",
    "check_feasibility",
    "download_cost",
    "miss_probability",
    "recommendation_cost",
    "total_cost",
    "validate_instance",
]

__version__ = "0.1.0"
