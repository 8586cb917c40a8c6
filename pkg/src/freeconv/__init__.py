"""Eigenvalue distributions of selfadjoint polynomials in free random variables.

The pipeline linearizes a polynomial into a matrix pencil, solves an
operator-valued subordination fixed point for its matrix-valued Cauchy
transform and reads the density off the (1,1) entry.  Scalar free
convolution, non-crossing partition combinatorics and random-matrix
Monte Carlo provide independent checks.
"""

from .linearize import Linearization, linearize, verify_linearization
from .measures import (Atomic, DensityEstimate, MarchenkoPastur, SampledDensity, Semicircle,
                       SpectralMeasure, stieltjes_invert)
from .ncpoly import NCPolynomial, evaluate, parse_polynomial
from .ovconv import polynomial_density
from .scalarconv import free_add_convolve

__version__ = "0.1.0"

__all__ = [
    "Atomic", "DensityEstimate", "MarchenkoPastur", "SampledDensity", "Semicircle",
    "SpectralMeasure", "stieltjes_invert", "NCPolynomial", "parse_polynomial", "evaluate",
    "Linearization", "linearize", "verify_linearization", "polynomial_density",
    "free_add_convolve",
]
