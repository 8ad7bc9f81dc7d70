"""reglift: lift rough affine connections to optimal regularity on grids.

Discrete Cartan calculus for matrix/vector-valued differential forms,
matrix-free elliptic solvers, the epsilon-rescaled fixed-point scheme that
constructs the regularizing Jacobian field, curvature/gauge diagnostics,
and deterministic test-case generators, tied together by a CLI.
"""

__version__ = "0.1.0"

from .grid import Grid
from .forms import (
    Connection,
    MatrixForm,
    VectorForm,
    codiff,
    ext_d,
    lp_norm,
    mat_inner,
    vec_div,
    vectorize,
    w1p_norm,
    wedge,
)

__all__ = [
    "Grid",
    "MatrixForm",
    "VectorForm",
    "Connection",
    "wedge",
    "ext_d",
    "codiff",
    "mat_inner",
    "vectorize",
    "vec_div",
    "lp_norm",
    "w1p_norm",
]
