"""Drift-diffusion on directed metric graphs: a structure-preserving finite
volume solver, per-edge operator surrogates (exact or learned), loss-based
coupling of edges into graph solutions, and parameter identification from
noisy midpoint measurements."""

__version__ = "0.1.0"

from .graphs import BoundaryData, MetricGraph, build_graph, classify_edges  # noqa: F401
from .fvm import Discretization, GraphField, simulate, total_mass  # noqa: F401
