"""Pure-numpy stencil kernels.

These are the reference implementations of the hot grid kernels; the
compiled extension in ``_stencil.pyx`` follows the exact same per-point
arithmetic (same operand order, same associations), so both backends
produce bit-identical results.

All arrays carry one leading component axis: shape (M, s0, s1[, s2]).
"""

import numpy as np


def diff_fwd(a, axis, inv_h):
    """Forward difference along spatial axis, backward fallback on the last row.

    out[i] = (a[i+1] - a[i]) * inv_h          for i < last
    out[last] = (a[last] - a[last-1]) * inv_h
    """
    out = np.empty_like(a)
    ax = axis + 1
    lo = [slice(None)] * a.ndim
    hi = [slice(None)] * a.ndim
    lo[ax] = slice(0, -1)
    hi[ax] = slice(1, None)
    np.subtract(a[tuple(hi)], a[tuple(lo)], out=out[tuple(lo)])
    last = [slice(None)] * a.ndim
    prev = [slice(None)] * a.ndim
    last[ax] = slice(-1, None)
    prev[ax] = slice(-2, -1)
    np.subtract(a[tuple(last)], a[tuple(prev)], out=out[tuple(last)])
    out *= inv_h
    return out


def diff_bwd(a, axis, inv_h):
    """Backward difference along spatial axis, forward fallback on the first row.

    out[i] = (a[i] - a[i-1]) * inv_h          for i > 0
    out[0] = (a[1] - a[0]) * inv_h
    """
    out = np.empty_like(a)
    ax = axis + 1
    lo = [slice(None)] * a.ndim
    hi = [slice(None)] * a.ndim
    lo[ax] = slice(0, -1)
    hi[ax] = slice(1, None)
    np.subtract(a[tuple(hi)], a[tuple(lo)], out=out[tuple(hi)])
    first = [slice(None)] * a.ndim
    second = [slice(None)] * a.ndim
    first[ax] = slice(0, 1)
    second[ax] = slice(1, 2)
    np.subtract(a[tuple(second)], a[tuple(first)], out=out[tuple(first)])
    out *= inv_h
    return out


def _shifted_pair_sum(x, ax, mode):
    """(left + right) with zero ('dirichlet') or reflected ('neumann') halo."""
    s = x.shape[ax]
    left = np.zeros_like(x)
    right = np.zeros_like(x)
    sl_dst = [slice(None)] * x.ndim
    sl_src = [slice(None)] * x.ndim
    sl_dst[ax] = slice(1, None)
    sl_src[ax] = slice(0, -1)
    left[tuple(sl_dst)] = x[tuple(sl_src)]
    sl_dst[ax] = slice(0, -1)
    sl_src[ax] = slice(1, None)
    right[tuple(sl_dst)] = x[tuple(sl_src)]
    if mode == "neumann":
        edge = [slice(None)] * x.ndim
        inner = [slice(None)] * x.ndim
        edge[ax] = slice(0, 1)
        inner[ax] = slice(1, 2)
        left[tuple(edge)] = x[tuple(inner)]
        edge[ax] = slice(s - 1, s)
        inner[ax] = slice(s - 2, s - 1)
        right[tuple(edge)] = x[tuple(inner)]
    return left + right


def _neglap(x, inv_h2, mode):
    c0 = 0.0
    for w in inv_h2:
        c0 = c0 + 2.0 * w
    acc = _shifted_pair_sum(x, 1, mode) * inv_h2[0]
    for j in range(1, len(inv_h2)):
        acc += _shifted_pair_sum(x, j + 1, mode) * inv_h2[j]
    return c0 * x - acc


def neglap_dirichlet(x, inv_h2):
    """Apply -Laplacian with an implicit zero halo (homogeneous Dirichlet).

    out = c0*x - sum_j (left_j + right_j)*inv_h2[j],  c0 = 2*sum(inv_h2),
    accumulated in axis order.
    """
    return _neglap(x, tuple(inv_h2), "dirichlet")


def neglap_neumann(x, inv_h2):
    """Apply -Laplacian with reflected halo (homogeneous Neumann ghost rows)."""
    return _neglap(x, tuple(inv_h2), "neumann")
