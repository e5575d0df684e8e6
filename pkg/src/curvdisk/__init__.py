"""Conformal metrics on the unit disk with prescribed Gaussian and geodesic curvature.

Submodules
----------
expr        closed-form curvature expressions
diskgrid    polar spectral grid, quadrature and Neumann Poisson solver
curvature   harmonic extension, the Phi field and Brouwer degree
oracle      explicit bubble solutions for constant curvature
meanfield   normalization, the operator T, J, center of mass, identities
solver      constrained minimization, multiplier field, homotopies
cli         command-line interface
"""

from .diskgrid import Grid, build_grid
from .expr import Expression, parse

__version__ = "0.1.0"

__all__ = ["Grid", "build_grid", "Expression", "parse", "__version__"]
