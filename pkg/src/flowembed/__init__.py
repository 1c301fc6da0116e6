"""Flow spectral embeddings.

Builds a sparse particle-trajectory probability matrix from a vector field,
derives the particle-mixture Laplacian, computes its smallest eigenvectors and
renders LIC-style images and colour-composited embeddings.
"""
from . import field, kernel, matrix, render, spectral, tracer
from ._backend import NAME as BACKEND
from .errors import (
    ConfigurationError,
    ConvergenceError,
    DisconnectedDomainWarning,
    FlowEmbedError,
    FormatError,
    InvariantError,
    PreconditionError,
    StageError,
)

__version__ = "0.1.0"
