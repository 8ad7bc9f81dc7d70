"""Matrix- and vector-valued differential forms on structured grids.

Coefficients are stored on increasing multi-indices only (antisymmetry is
implicit): a matrix k-form holds an array of shape (n, n, C(n,k), *grid.shape),
a vector k-form (n, C(n,k), *grid.shape), component-major then row-major over
grid points.

Operator conventions (fixed so that dd = 0, delta delta = 0 exactly and
d delta + delta d reproduces the standard second-difference Laplacian on
0-forms):

* ``ext_d`` uses forward differences, falling back to backward on the last
  row of each axis;
* ``codiff`` uses backward differences, falling back to forward on the first
  row, with the sign making the composite Laplacian +sum of second
  differences.
"""

import math
from dataclasses import dataclass
from functools import lru_cache
from itertools import combinations

import numpy as np

from . import kernels
from .grid import Grid


class DegreeError(ValueError):
    pass


class GridMismatchError(ValueError):
    pass


@lru_cache(maxsize=None)
def increasing_indices(n, k):
    """All strictly increasing k-tuples from {0..n-1}, lexicographic."""
    if k < 0 or k > n:
        return ()
    return tuple(combinations(range(n), k))


@lru_cache(maxsize=None)
def index_position(n, k):
    return {I: p for p, I in enumerate(increasing_indices(n, k))}


def insert_index(j, I):
    """Insert axis j into increasing tuple I: returns (sign, K) or (0, None)."""
    if j in I:
        return 0, None
    pos = sum(1 for i in I if i < j)
    K = tuple(sorted(I + (j,)))
    return (-1) ** pos, K


def merge_sign(I, J):
    """Sign of sorting the concatenation (I, J); 0 if they overlap."""
    if set(I) & set(J):
        return 0, None
    seq = list(I + J)
    sign = 1
    # insertion sort, counting swaps
    for a in range(1, len(seq)):
        b = a
        while b > 0 and seq[b - 1] > seq[b]:
            seq[b - 1], seq[b] = seq[b], seq[b - 1]
            sign = -sign
            b -= 1
    return sign, tuple(seq)


def _check_same_grid(a, b):
    if a.grid != b.grid:
        raise GridMismatchError("forms live on different grids")


@dataclass
class _FormBase:
    grid: Grid
    degree: int
    comps: np.ndarray

    def __post_init__(self):
        n = self.grid.n
        if not 0 <= self.degree <= n:
            raise DegreeError(f"degree {self.degree} invalid for n={n}")
        nI = len(increasing_indices(n, self.degree))
        expect = self._lead_shape(n) + (nI,) + self.grid.shape
        comps = np.ascontiguousarray(self.comps, dtype=np.float64)
        if comps.shape != expect:
            raise ValueError(f"component shape {comps.shape} != {expect}")
        self.comps = comps

    def validate(self):
        if not np.all(np.isfinite(self.comps)):
            raise ValueError("form has non-finite components")
        return self

    @property
    def n(self):
        return self.grid.n

    @property
    def n_indices(self):
        return self.comps.shape[len(self._lead_shape(self.n))]

    def flat(self):
        """View shaped (M, *grid.shape) for kernels."""
        return self.comps.reshape((-1,) + self.grid.shape)

    def copy(self):
        return type(self)(self.grid, self.degree, self.comps.copy())

    def _like(self, comps):
        return type(self)(self.grid, self.degree, comps)

    def _compatible(self, other):
        _check_same_grid(self, other)
        if self.degree != other.degree or self.comps.shape != other.comps.shape:
            raise DegreeError("forms have mismatched degree or layout")

    def __add__(self, other):
        self._compatible(other)
        return self._like(self.comps + other.comps)

    def __sub__(self, other):
        self._compatible(other)
        return self._like(self.comps - other.comps)

    def __mul__(self, s):
        return self._like(self.comps * float(s))

    __rmul__ = __mul__

    def __neg__(self):
        return self._like(-self.comps)


class MatrixForm(_FormBase):
    """Matrix-valued k-form: comps[mu, nu, I, x...]."""

    @staticmethod
    def _lead_shape(n):
        return (n, n)

    @classmethod
    def zeros(cls, grid, degree):
        nI = len(increasing_indices(grid.n, degree))
        return cls(grid, degree, np.zeros((grid.n, grid.n, nI) + grid.shape))


class VectorForm(_FormBase):
    """Vector-valued k-form: comps[mu, I, x...]."""

    @staticmethod
    def _lead_shape(n):
        return (n,)

    @classmethod
    def zeros(cls, grid, degree):
        nI = len(increasing_indices(grid.n, degree))
        return cls(grid, degree, np.zeros((grid.n, nI) + grid.shape))


class Connection(MatrixForm):
    """Matrix-valued 1-form with the semantics Gamma^mu_{nu i} dx^i."""

    def __post_init__(self):
        if self.degree != 1:
            raise DegreeError("a connection is a matrix-valued 1-form")
        super().__post_init__()

    @classmethod
    def zeros(cls, grid, degree=1):
        return cls(grid, 1, np.zeros((grid.n, grid.n, grid.n) + grid.shape))


def as_connection(form):
    if isinstance(form, Connection):
        return form
    if form.degree != 1 or not isinstance(form, MatrixForm):
        raise DegreeError("expected a matrix-valued 1-form")
    return Connection(form.grid, 1, form.comps)


def identity_form(grid):
    """Matrix 0-form equal to the identity matrix at every point."""
    c = np.zeros((grid.n, grid.n, 1) + grid.shape)
    for i in range(grid.n):
        c[i, i, 0] = 1.0
    return MatrixForm(grid, 0, c)


# ---------------------------------------------------------------------------
# first-order operators


def ext_d(form):
    """Discrete exterior derivative (forward differences, componentwise)."""
    n, k = form.n, form.degree
    if k >= n:
        raise DegreeError(f"ext_d undefined on top-degree ({k}) forms")
    pos_in = index_position(n, k)
    idx_out = increasing_indices(n, k + 1)
    lead = form._lead_shape(n)
    out = np.zeros(lead + (len(idx_out),) + form.grid.shape)
    src = form.comps.reshape((-1, len(pos_in)) + form.grid.shape)
    dst = out.reshape((-1, len(idx_out)) + form.grid.shape)
    inv_h = [1.0 / hj for hj in form.grid.h]
    for pK, K in enumerate(idx_out):
        for t, j in enumerate(K):
            I = K[:t] + K[t + 1 :]
            term = kernels.diff_fwd(src[:, pos_in[I]], j, inv_h[j])
            if t % 2 == 0:
                dst[:, pK] += term
            else:
                dst[:, pK] -= term
    cls = VectorForm if isinstance(form, VectorForm) else MatrixForm
    return cls(form.grid, k + 1, out)


def codiff(form):
    """Discrete codifferential (backward differences), sign fixed so that
    dd* + d*d equals +(standard second-difference Laplacian) componentwise."""
    n, k = form.n, form.degree
    if k < 1:
        raise DegreeError("codiff undefined on 0-forms")
    idx_in = increasing_indices(n, k)
    pos_out = index_position(n, k - 1)
    lead = form._lead_shape(n)
    out = np.zeros(lead + (len(pos_out),) + form.grid.shape)
    src = form.comps.reshape((-1, len(idx_in)) + form.grid.shape)
    dst = out.reshape((-1, len(pos_out)) + form.grid.shape)
    inv_h = [1.0 / hj for hj in form.grid.h]
    for pK, K in enumerate(idx_in):
        for t, j in enumerate(K):
            I = K[:t] + K[t + 1 :]
            term = kernels.diff_bwd(src[:, pK], j, inv_h[j])
            if t % 2 == 0:
                dst[:, pos_out[I]] += term
            else:
                dst[:, pos_out[I]] -= term
    cls = MatrixForm if isinstance(form, MatrixForm) else VectorForm
    return cls(form.grid, k - 1, out)


# ---------------------------------------------------------------------------
# algebra


def wedge(w, u):
    """Wedge product with matrix multiplication of coefficients."""
    _check_same_grid(w, u)
    n = w.n
    k, l = w.degree, u.degree
    if k + l > n:
        raise DegreeError(f"wedge degree overflow: {k}+{l} > {n}")
    pos_out = index_position(n, k + l)
    out = np.zeros((n, n, len(pos_out)) + w.grid.shape)
    pos_w = index_position(n, k)
    pos_u = index_position(n, l)
    for I, pI in pos_w.items():
        for J, pJ in pos_u.items():
            sign, K = merge_sign(I, J)
            if sign == 0:
                continue
            prod = np.einsum("ab...,bc...->ac...", w.comps[:, :, pI], u.comps[:, :, pJ])
            if sign > 0:
                out[:, :, pos_out[K]] += prod
            else:
                out[:, :, pos_out[K]] -= prod
    return MatrixForm(w.grid, k + l, out)


def mat_inner(w, u):
    """Matrix-valued inner product <w; u>^mu_nu = sum_{sigma, I} w^mu_{sigma I} u^sigma_{nu I}."""
    _check_same_grid(w, u)
    if w.degree != u.degree:
        raise DegreeError("mat_inner needs equal degrees")
    c = np.einsum("abi...,bci...->ac...", w.comps, u.comps)
    return MatrixForm(w.grid, 0, c[:, :, None])


def matmul0(A, w):
    """Pointwise product of a matrix 0-form A with a matrix k-form w (A . w)."""
    _check_same_grid(A, w)
    if A.degree != 0:
        raise DegreeError("left factor must be a matrix 0-form")
    c = np.einsum("ab...,bci...->aci...", A.comps[:, :, 0], w.comps)
    return MatrixForm(w.grid, w.degree, c)


def vectorize(w):
    """Convert a matrix k-form into a vector (k+1)-form: w^mu_{nu I} dx^nu ^ dx^I."""
    n, k = w.n, w.degree
    if k >= n:
        raise DegreeError("vectorize degree overflow")
    if not isinstance(w, MatrixForm):
        raise DegreeError("vectorize acts on matrix-valued forms")
    pos_in = index_position(n, k)
    pos_out = index_position(n, k + 1)
    out = np.zeros((n, len(pos_out)) + w.grid.shape)
    for I, pI in pos_in.items():
        for nu in range(n):
            sign, K = insert_index(nu, I)
            if sign == 0:
                continue
            if sign > 0:
                out[:, pos_out[K]] += w.comps[:, nu, pI]
            else:
                out[:, pos_out[K]] -= w.comps[:, nu, pI]
    return VectorForm(w.grid, k + 1, out)


def devectorize(v):
    """Inverse of vectorize on degree 1: vector 1-form -> matrix 0-form."""
    if not isinstance(v, VectorForm) or v.degree != 1:
        raise DegreeError("devectorize expects a vector-valued 1-form")
    return MatrixForm(v.grid, 0, v.comps[:, :, None])


def vec_div(w):
    """div(w)^alpha_I = sum_l D^-_l (w^alpha_l)_I  (backward differences)."""
    if not isinstance(w, MatrixForm):
        raise DegreeError("vec_div acts on matrix-valued forms")
    n, k = w.n, w.degree
    nI = w.n_indices
    out = np.zeros((n, nI) + w.grid.shape)
    inv_h = [1.0 / hj for hj in w.grid.h]
    for l in range(n):
        out += kernels.diff_bwd(
            w.comps[:, l].reshape((-1,) + w.grid.shape), l, inv_h[l]
        ).reshape((n, nI) + w.grid.shape)
    return VectorForm(w.grid, k, out)


def pointwise_inverse(J, det_floor=0.0):
    """Pointwise matrix inverse of a matrix 0-form; returns (inverse, min |det|).

    Raises ValueError when |det| drops to det_floor or below; the offending
    flat point index is reported.
    """
    if J.degree != 0:
        raise DegreeError("pointwise inverse needs a matrix 0-form")
    n = J.n
    mats = np.moveaxis(J.comps[:, :, 0].reshape(n, n, -1), -1, 0)
    dets = np.linalg.det(mats)
    min_det = float(np.min(np.abs(dets)))
    if min_det <= det_floor:
        bad = int(np.argmin(np.abs(dets)))
        raise ValueError(
            f"singular Jacobian: |det| = {min_det:.3e} <= {det_floor:.3e} "
            f"at flat point {bad}"
        )
    inv = np.linalg.inv(mats)
    comps = np.moveaxis(inv, 0, -1).reshape(n, n, *J.grid.shape)[:, :, None]
    return MatrixForm(J.grid, 0, np.ascontiguousarray(comps)), min_det


# ---------------------------------------------------------------------------
# norms and inner products


def _abs_pow_sum(arr, p, weights):
    return float(np.sum(np.abs(arr) ** p * weights))


def lp_norm(form, p):
    """Discrete L^p norm: (sum_x W(x) sum_components |.|^p)^(1/p); p=inf is the max."""
    arr = form.comps
    if p == np.inf or p == "inf":
        return float(np.max(np.abs(arr))) if arr.size else 0.0
    p = float(p)
    if p < 1.0:
        raise ValueError("p must be >= 1")
    W = form.grid.trapezoid_weights()
    return _abs_pow_sum(arr, p, W) ** (1.0 / p)


def w1p_norm(form, p):
    """Discrete W^{1,p} norm: ||w||_p + sum_j ||D^+_j w||_p (forward differences)."""
    p = float(p)
    if p < 1.0:
        raise ValueError("p must be >= 1")
    W = form.grid.trapezoid_weights()
    total = _abs_pow_sum(form.comps, p, W) ** (1.0 / p)
    flat = form.flat()
    for j in range(form.n):
        d = kernels.diff_fwd(flat, j, 1.0 / form.grid.h[j])
        total += _abs_pow_sum(d, p, W) ** (1.0 / p)
    return total


def l2_inner(w, u):
    """Weighted L^2 inner product summing all components pointwise."""
    _check_same_grid(w, u)
    if w.comps.shape != u.comps.shape:
        raise DegreeError("l2_inner needs identical component layouts")
    W = w.grid.trapezoid_weights()
    return float(np.sum(w.comps * u.comps * W))


# ---------------------------------------------------------------------------
# utilities


def restrict(form, t_lo, t_hi=None):
    """Trim ``t_lo``/``t_hi`` node layers per axis, returning a form on the subgrid."""
    if t_hi is None:
        t_hi = t_lo
    g = form.grid
    if any(s - t_lo - t_hi < 3 for s in g.shape):
        raise ValueError("restriction leaves fewer than 3 points per axis")
    sub = Grid(
        shape=tuple(s - t_lo - t_hi for s in g.shape),
        lo=tuple(a + t_lo * h for a, h in zip(g.lo, g.h)),
        hi=tuple(b - t_hi * h for b, h in zip(g.hi, g.h)),
    )
    lead = len(form._lead_shape(g.n)) + 1
    sl = (slice(None),) * lead + tuple(slice(t_lo, s - t_hi) for s in g.shape)
    return type(form)(sub, form.degree, form.comps[sl].copy())


def stencil_laplacian(form):
    """Componentwise (2n+1)-point Laplacian; boundary rows are left at zero."""
    flat = form.flat()
    out = np.zeros_like(flat)
    inner = tuple(slice(1, -1) for _ in range(form.n))
    for j in range(form.n):
        w = 1.0 / (form.grid.h[j] * form.grid.h[j])
        up = [slice(1, -1)] * form.n
        dn = [slice(1, -1)] * form.n
        up[j] = slice(2, None)
        dn[j] = slice(0, -2)
        out[(slice(None),) + inner] += (
            flat[(slice(None),) + tuple(up)]
            - 2.0 * flat[(slice(None),) + inner]
            + flat[(slice(None),) + tuple(dn)]
        ) * w
    return type(form)(form.grid, form.degree, out.reshape(form.comps.shape))


def dyadic_quantize(arr, bits=40):
    """Round onto the dyadic lattice 2^(e-bits), e = exponent of max |arr|.

    Differences and power-of-two rescalings of quantized values are then
    exact in double precision, which the Helmholtz projection relies on for
    its bitwise d-preservation guarantee.
    """
    arr = np.asarray(arr, dtype=np.float64)
    m = float(np.max(np.abs(arr))) if arr.size else 0.0
    if m == 0.0 or not math.isfinite(m):
        return arr.copy()
    q = 2.0 ** (math.ceil(math.log2(m)) - bits)
    return np.round(arr / q) * q


def interpolate(form, points):
    """Multilinear interpolation of every component at arbitrary points.

    ``points``: array (n, ...). Returns components shaped
    (*component_axes, ...points-shape).
    """
    g = form.grid
    pts = np.asarray(points, dtype=np.float64)
    if pts.shape[0] != g.n:
        raise ValueError("points must have n leading coordinates")
    tail = pts.shape[1:]
    P = int(np.prod(tail)) if tail else 1
    pts = pts.reshape(g.n, P)
    base = []
    frac = []
    for j in range(g.n):
        t = (pts[j] - g.lo[j]) / g.h[j]
        i = np.floor(t).astype(np.int64)
        i = np.clip(i, 0, g.shape[j] - 2)
        base.append(i)
        frac.append(t - i)
    lead = form.comps.shape[: -g.n]
    src = form.comps.reshape((-1,) + g.shape)
    out = np.zeros((src.shape[0], P))
    for corner in range(2**g.n):
        wgt = np.ones(P)
        idx = []
        for j in range(g.n):
            b = (corner >> j) & 1
            idx.append(base[j] + b)
            wgt = wgt * (frac[j] if b else (1.0 - frac[j]))
        out += src[(slice(None), *idx)] * wgt
    return out.reshape(lead + tail)
