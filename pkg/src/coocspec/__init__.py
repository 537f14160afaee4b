"""Spectral analysis of user-item co-occurrence matrices for implicit-feedback recommendation."""

from .sparse import InteractionMatrix
from .spectra import SolverOptions, TruncatedSVD, truncated_svd

__all__ = ["InteractionMatrix", "SolverOptions", "TruncatedSVD", "truncated_svd"]
__version__ = "0.1.0"
