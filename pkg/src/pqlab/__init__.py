"""pqlab: a numerical laboratory for the Dirichlet (p,q)-Laplacian.

Computes first eigenpairs of the r-Laplacian by normalized gradient flow,
exact 1-D eigenvalues by shooting, the critical curves separating the
parameter regions, Nehari-manifold geometry, and runs deflated searches for
the multiple solution pairs of

    -div(|grad u|^{p-2} grad u) - div(|grad u|^{q-2} grad u)
        = alpha |u|^{p-2} u + beta |u|^{q-2} u,   u = 0 on the boundary,

on intervals and 2-D pixel domains, with 1 < q < p.
"""

__version__ = "0.1.0"

from .discretization import (
    Domain,
    GridFunction,
    Mesh,
    ProblemParams,
    grad_seminorm,
    interval,
    lr_norm,
    pixel2d,
    weak_residual,
)
from .functionals import FunctionalValues, evaluate, level_membership
from .kernels import backend_name

__all__ = [
    "Domain",
    "GridFunction",
    "Mesh",
    "ProblemParams",
    "FunctionalValues",
    "backend_name",
    "evaluate",
    "grad_seminorm",
    "interval",
    "level_membership",
    "lr_norm",
    "pixel2d",
    "weak_residual",
    "__version__",
]
