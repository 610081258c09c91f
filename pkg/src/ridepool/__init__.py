"""Solver suite for large-scale ride pooling and PDPTW instances.

Core pieces: a shared routing model with an exact O(1) sequence-
concatenation evaluation (`model`, `evaluation`), a sequential
matheuristic that matches requests into pools and dispatches pooled
trips to vehicles through disjoint shortest paths (`pooling`,
`dispatch`), a decomposition-based iterated local search built on
string-removal ruin and blink recreate (`ruin_recreate`, `ils`), a
displacement-bounded route resequencer (`resequence`), and a
guided-ejection fleet minimizer for classic benchmarks (`fleetmin`).
"""

from .model import (
    Instance, Objective, Request, Route, Solution, Vehicle, Violation,
    evaluate, validate,
)
from .params import Params

__all__ = [
    "Instance", "Objective", "Params", "Request", "Route", "Solution",
    "Vehicle", "Violation", "evaluate", "validate",
]

__version__ = "0.1.0"
