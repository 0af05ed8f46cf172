"""
Discontinuous Galerkin solver for the unsteady p-Navier-Stokes equations.

Modules
-------
mesh          triangulations of (-1, 1)^2 and red refinement
elements      reference quadrature and nodal bases
spaces        broken polynomial spaces, projections, continuous pressures
dgcalc        jumps, averages, liftings, DG gradient and divergence
constitutive  power-law stress, N-functions, F and F*
forms         residual and Jacobian assembly of the saddle-point system
solver        Newton's method with sparse direct solves
rothe         implicit Euler time loop and temporal interpolants
bench         manufactured solutions, error quantities, EOC tables, CLI
"""
from .constitutive import ModelParams
from .mesh import Mesh, build_initial_grid, build_level, refine_red
from .spaces import BrokenField, ContinuousPressure, DGSpace, l2_project

__version__ = "0.1.0"

__all__ = [
    "ModelParams",
    "Mesh",
    "build_initial_grid",
    "build_level",
    "refine_red",
    "BrokenField",
    "ContinuousPressure",
    "DGSpace",
    "l2_project",
]
