"""Online reconstruction of time-varying signals on graphs.

The signal is split into a slowly varying trend, tracked by a Kalman
recursion, and an instantaneous part recovered by kernel kriging. Kernels
are Laplacian spectral kernels, either fixed or learned online as a
nonnegative combination of a dictionary.
"""

from .errors import ReconstructionError
from .filter import FilterConfig, FilterState, Observation, SlotEstimate, initial_state, kekrikf_step
from .graph import EigenBasis, Graph, GraphSequence, build_graph, eigendecompose, laplacian
from .kernels import KernelDictionary, KernelMatrix, KernelSpec, build_kernel, combine
from .mkl import MKLConfig, okm_solve, mkrikf_step
from .oracle import batch_oracle

__version__ = "0.1.0"

__all__ = [
    "EigenBasis", "FilterConfig", "FilterState", "Graph", "GraphSequence", "KernelDictionary",
    "KernelMatrix", "KernelSpec", "MKLConfig", "Observation", "ReconstructionError", "SlotEstimate",
    "batch_oracle", "build_graph", "build_kernel", "combine", "eigendecompose", "initial_state",
    "kekrikf_step", "laplacian", "mkrikf_step", "okm_solve",
]
