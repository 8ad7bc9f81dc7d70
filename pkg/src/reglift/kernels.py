"""Stencil kernel backend selection.

The hot grid kernels (axis differences and Laplacian matvecs) exist twice:
a compiled Cython extension (``reglift._stencil``) and a pure-numpy
fallback (``reglift._kernels_py``). Both follow the same per-point
arithmetic, so results are bit-identical; the compiled path is just
faster inside the Krylov loops.

Selection happens at import time. Set ``REGLIFT_KERNELS=python`` or
``=native`` to force a backend; default is native when available.
"""

import os

import numpy as np

from . import _kernels_py

_choice = os.environ.get("REGLIFT_KERNELS", "auto").lower()
_native = None
if _choice in ("auto", "native"):
    try:
        from . import _stencil as _native
    except ImportError:
        _native = None
        if _choice == "native":
            raise
BACKEND = "native" if _native is not None else "python"


def backend_name():
    return BACKEND


def _as_c(a):
    return np.ascontiguousarray(a, dtype=np.float64)


def diff_fwd(a, axis, inv_h):
    """Forward difference along spatial ``axis`` (backward on the last row).

    ``a`` has shape (M, *spatial); returns a new array of the same shape.
    """
    if _native is not None:
        a = _as_c(a)
        if a.ndim == 3:
            return _native.diff_fwd_2d(a, axis, inv_h)
        if a.ndim == 4:
            return _native.diff_fwd_3d(a, axis, inv_h)
    return _kernels_py.diff_fwd(a, axis, inv_h)


def diff_bwd(a, axis, inv_h):
    """Backward difference along spatial ``axis`` (forward on the first row)."""
    if _native is not None:
        a = _as_c(a)
        if a.ndim == 3:
            return _native.diff_bwd_2d(a, axis, inv_h)
        if a.ndim == 4:
            return _native.diff_bwd_3d(a, axis, inv_h)
    return _kernels_py.diff_bwd(a, axis, inv_h)


def neglap_dirichlet(x, inv_h2):
    """-Laplacian matvec with implicit zero halo. ``x``: (M, *spatial)."""
    if _native is not None:
        x = _as_c(x)
        if x.ndim == 3:
            return _native.neglap_2d(x, inv_h2[0], inv_h2[1], False)
        if x.ndim == 4:
            return _native.neglap_3d(x, inv_h2[0], inv_h2[1], inv_h2[2], False)
    return _kernels_py.neglap_dirichlet(x, inv_h2)


def neglap_neumann(x, inv_h2):
    """-Laplacian matvec with reflected halo (homogeneous Neumann rows)."""
    if _native is not None:
        x = _as_c(x)
        if x.ndim == 3:
            return _native.neglap_2d(x, inv_h2[0], inv_h2[1], True)
        if x.ndim == 4:
            return _native.neglap_3d(x, inv_h2[0], inv_h2[1], inv_h2[2], True)
    return _kernels_py.neglap_neumann(x, inv_h2)
