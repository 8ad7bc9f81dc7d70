"""Linear elliptic solves on the grid.

Poisson problems with Dirichlet or zero-mean Neumann data, the gradient
primitive for curl-free 1-forms, and the Helmholtz projection onto
divergence-free 1-forms. Everything is componentwise over the leading
matrix/vector axes and matrix-free by default.

method "cg" is the conjugate-residual variant of the conjugate-gradient
family: same cost per iteration on the SPD stencil operator, but it
minimizes the residual 2-norm, so the reported residual history is
monotonically non-increasing. method "direct" assembles the sparse
operator once per (window, spacing) and reuses the LU factors.
"""

import math
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from . import kernels
from .forms import VectorForm, codiff, dyadic_quantize, ext_d

_LU_CACHE = {}


@dataclass
class LinearSolverConfig:
    method: str = "cg"
    tol_rel: float = 1e-11
    max_iter: int = 100000

    def __post_init__(self):
        if self.method not in ("cg", "direct"):
            raise ValueError(f"unknown linear method {self.method!r}")
        if not self.tol_rel > 0:
            raise ValueError("tol_rel must be positive")
        if self.max_iter < 1:
            raise ValueError("max_iter must be >= 1")


@dataclass
class SolveReport:
    iterations: int = 0
    rel_residual: float = 0.0
    converged: bool = True
    method: str = "cg"
    stage: str = ""
    residual_history: list = field(default_factory=list, repr=False)

    def merge(self, other):
        self.iterations = max(self.iterations, other.iterations)
        self.rel_residual = max(self.rel_residual, other.rel_residual)
        self.converged = self.converged and other.converged
        return self


class SolverFailure(RuntimeError):
    def __init__(self, message, report):
        super().__init__(message)
        self.report = report


class IntegrabilityError(ValueError):
    def __init__(self, message, curl_norm):
        super().__init__(message)
        self.curl_norm = curl_norm


def _cr(matvec, b, tol_rel, max_iter, dot):
    """Conjugate-residual iteration for a (semi)definite self-adjoint operator."""
    bnorm = math.sqrt(dot(b, b))
    x = np.zeros_like(b)
    if bnorm == 0.0:
        return x, SolveReport(0, 0.0, True)
    r = b.copy()
    p = r.copy()
    Ar = matvec(r)
    Ap = Ar.copy()
    rAr = dot(r, Ar)
    history = [1.0]
    it = 0
    while it < max_iter:
        it += 1
        pAp = dot(Ap, Ap)
        if pAp <= 0.0 or rAr == 0.0:
            break
        alpha = rAr / pAp
        x += alpha * p
        r -= alpha * Ap
        res = math.sqrt(dot(r, r)) / bnorm
        history.append(res)
        if res <= tol_rel:
            return x, SolveReport(it, res, True, residual_history=history)
        Ar = matvec(r)
        rAr_new = dot(r, Ar)
        beta = rAr_new / rAr
        p = r + beta * p
        Ap = Ar + beta * Ap
        rAr = rAr_new
    res = math.sqrt(dot(r, r)) / bnorm
    return x, SolveReport(it, res, res <= tol_rel, residual_history=history)


def _dot(a, b):
    return float(np.dot(a.ravel(), b.ravel()))


def _tridiag(s, kind):
    main = np.full(s, 2.0)
    off = np.full(s - 1, -1.0)
    T = sp.diags([off, main, off], [-1, 0, 1], format="lil")
    if kind == "neumann":
        T[0, 1] = -2.0
        T[s - 1, s - 2] = -2.0
    return T


def _assemble(shape, inv_h2, kind):
    key = (shape, inv_h2, kind)
    if key not in _LU_CACHE:
        n = len(shape)
        A = None
        for j in range(n):
            ops = [sp.identity(s, format="csr") for s in shape]
            ops[j] = _tridiag(shape[j], kind).tocsr() * inv_h2[j]
            term = ops[0]
            for k in range(1, n):
                term = sp.kron(term, ops[k], format="csr")
            A = term if A is None else A + term
        if kind == "neumann":
            # pin one node; the zero-mean shift restores the true solution
            A = A.tolil()
            A[0, :] = 0.0
            A[0, 0] = 1.0
            A = A.tocsc()
        else:
            A = A.tocsc()
        _LU_CACHE[key] = spla.splu(A)
    return _LU_CACHE[key]


def _solve_window(B, win_shape, inv_h2, cfg, stage):
    """Solve -lap x = B on a zero-Dirichlet window for each leading component."""
    M = B.shape[0]
    flat = B.reshape(M, -1)
    out = np.empty_like(B)
    report = SolveReport(method=cfg.method, stage=stage)
    if cfg.method == "direct":
        lu = _assemble(win_shape, inv_h2, "dirichlet")
        x = lu.solve(flat.T).T
        out[:] = x.reshape(B.shape)
        r = B - kernels.neglap_dirichlet(out, inv_h2)
        for m in range(M):
            bn = np.linalg.norm(flat[m])
            rel = float(np.linalg.norm(r[m])) / bn if bn > 0 else 0.0
            report.merge(SolveReport(1, rel, True, cfg.method, stage))
        return out, report
    for m in range(M):
        x, rep = _cr(
            lambda v: kernels.neglap_dirichlet(v[None], inv_h2)[0],
            B[m],
            cfg.tol_rel,
            cfg.max_iter,
            _dot,
        )
        out[m] = x
        rep.method, rep.stage = cfg.method, stage
        report.merge(rep)
    if not report.converged:
        raise SolverFailure(
            f"{stage}: linear solve stalled at rel residual {report.rel_residual:.3e}",
            report,
        )
    return out, report


def solve_poisson_dirichlet(f, g=None, cfg=None, hi_margin=1, stage="poisson_dirichlet"):
    """Solve lap u = f on interior rows with u = g on the boundary band.

    ``f`` and ``g`` are 0-forms (matrix- or vector-valued); ``g`` may be None
    for homogeneous data. ``hi_margin`` widens the Dirichlet band to that many
    layers on the upper faces (the rt iteration uses 2 to realize the discrete
    integrability identity); the equation is imposed on the remaining window.
    """
    cfg = cfg or LinearSolverConfig()
    if f.degree != 0:
        raise ValueError("Poisson solver expects 0-forms")
    grid = f.grid
    F = f.flat()
    if g is None:
        G = np.zeros_like(F)
    else:
        if g.grid != grid or g.comps.shape != f.comps.shape:
            raise ValueError("boundary data must match the rhs layout")
        G = g.flat().copy()
    win = tuple(slice(1, s - hi_margin) for s in grid.shape)
    inv_h2 = tuple(1.0 / (hj * hj) for hj in grid.h)
    B = -F[(slice(None),) + win].copy()
    # boundary ring folded into the right-hand side
    for j in range(grid.n):
        w = inv_h2[j]
        lo_face = tuple(
            (slice(0, 1) if a == j else win[a]) for a in range(grid.n)
        )
        hi_face = tuple(
            (slice(grid.shape[a] - hi_margin, grid.shape[a] - hi_margin + 1) if a == j else win[a])
            for a in range(grid.n)
        )
        first = tuple(
            (slice(0, 1) if a == j else slice(None)) for a in range(grid.n)
        )
        last = tuple(
            (slice(-1, None) if a == j else slice(None)) for a in range(grid.n)
        )
        B[(slice(None),) + first] += G[(slice(None),) + lo_face] * w
        B[(slice(None),) + last] += G[(slice(None),) + hi_face] * w
    win_shape = tuple(s - 1 - hi_margin for s in grid.shape)
    X, report = _solve_window(B, win_shape, inv_h2, cfg, stage)
    U = G.copy()
    U[(slice(None),) + win] = X
    out = type(f)(grid, 0, U.reshape(f.comps.shape))
    return out, report


def _wmean(arr, W, vol):
    return np.sum(arr * W, axis=tuple(range(1, arr.ndim))) / vol


def solve_poisson_neumann_zero_mean(f, cfg=None, stage="poisson_neumann"):
    """Solve lap u = f - mean(f) with reflected (zero-Neumann) rows, mean(u) = 0.

    The right-hand side is compatibility-projected by subtracting its
    quadrature mean; the solution is normalized to zero quadrature mean.
    """
    cfg = cfg or LinearSolverConfig()
    if f.degree != 0:
        raise ValueError("Poisson solver expects 0-forms")
    grid = f.grid
    W = grid.trapezoid_weights()
    vol = grid.volume
    inv_h2 = tuple(1.0 / (hj * hj) for hj in grid.h)
    F = f.flat()
    mean = _wmean(F, W, vol)
    B = -(F - mean.reshape((-1,) + (1,) * grid.n))
    out = np.empty_like(F)
    report = SolveReport(method=cfg.method, stage=stage)

    if cfg.method == "direct":
        lu = _assemble(grid.shape, inv_h2, "neumann")
        flat = B.reshape(B.shape[0], -1).copy()
        flat[:, 0] = 0.0
        x = lu.solve(flat.T).T.reshape(B.shape)
        out[:] = x
    else:
        def wdot(a, b):
            return float(np.sum(a * b * W))

        for m in range(B.shape[0]):
            x, rep = _cr(
                lambda v: kernels.neglap_neumann(v[None], inv_h2)[0],
                B[m],
                cfg.tol_rel,
                cfg.max_iter,
                wdot,
            )
            out[m] = x
            rep.method, rep.stage = cfg.method, stage
            report.merge(rep)
        if not report.converged:
            raise SolverFailure(
                f"{stage}: linear solve stalled at rel residual "
                f"{report.rel_residual:.3e}",
                report,
            )
    out = out - _wmean(out, W, vol).reshape((-1,) + (1,) * grid.n)
    res = type(f)(grid, 0, out.reshape(f.comps.shape))
    return res, report


def _codiff_adjoint(f):
    """Divergence of a vector 1-form consistent with the Neumann operator.

    Interior rows coincide with codiff (backward differences); the first and
    last rows per axis carry the quadrature-consistent adjoint end values
    (+2 f_0/h and -2 f_{N-1}/h), which makes the ghost-reflection Neumann
    Laplacian applied to a 0-form phi reproduce this divergence of ext_d(phi)
    exactly: the zero-mean Neumann solve is then the least-squares primitive.
    """
    grid = f.grid
    n = grid.n
    out = np.zeros((n,) + grid.shape)

    def ax_slice(j, s):
        return (slice(None),) + tuple(
            s if a == j else slice(None) for a in range(n)
        )

    for j in range(n):
        comp = f.comps[:, j]
        inv_h = 1.0 / grid.h[j]
        # interior rows 1..N-1: backward difference, same as codiff
        out[ax_slice(j, slice(1, -1))] += (
            comp[ax_slice(j, slice(1, -1))] - comp[ax_slice(j, slice(0, -2))]
        ) * inv_h
        # end rows: +2 f_0 / h and -2 f_{N-1} / h (edge value; the stored
        # fallback value at the last row is never used)
        out[ax_slice(j, slice(0, 1))] += 2.0 * comp[ax_slice(j, slice(0, 1))] * inv_h
        out[ax_slice(j, slice(-1, None))] += (
            -2.0 * comp[ax_slice(j, slice(-2, -1))] * inv_h
        )
    return VectorForm(grid, 0, out[:, None])


def solve_grad_primitive(f, curl_tol=None, method="path", cfg=None):
    """Zero-mean primitive Psi with ext_d(Psi) ~ f for a curl-free 1-form f.

    Default realization is the discrete path integral summed along the
    axis-ordered staircase from the grid origin: it telescopes exactly when
    f is an exact discrete gradient, which is what the iteration feeds it.
    method="poisson" instead runs the zero-mean Neumann solve on the
    divergence of f (codiff on interior rows, adjoint-consistent end rows),
    which also reconstructs exact gradients to solver precision and serves
    as the independent cross-check route.
    """
    if not isinstance(f, VectorForm) or f.degree != 1:
        raise ValueError("grad primitive expects a vector-valued 1-form")
    grid = f.grid
    df = ext_d(f)
    curl = float(np.max(np.abs(df.comps)))
    if curl_tol is not None and curl > curl_tol:
        raise IntegrabilityError(
            f"input 1-form is not curl-free: ||df||_max = {curl:.3e} > {curl_tol:.3e}",
            curl,
        )
    n = grid.n
    report = SolveReport(method=method, stage="grad_primitive")
    if method == "path":
        psi = np.zeros((n,) + grid.shape)
        for ax in range(n):
            pin = tuple(slice(None) if a <= ax else slice(0, 1) for a in range(n))
            g = f.comps[(slice(None), ax) + pin]
            body = np.cumsum(g, axis=1 + ax) * grid.h[ax]
            P = np.zeros_like(g)
            dst = (slice(None),) * (1 + ax) + (slice(1, None),)
            src = (slice(None),) * (1 + ax) + (slice(0, -1),)
            P[dst] = body[src]
            psi = psi + P
    elif method == "poisson":
        rhs = _codiff_adjoint(f)
        sol, report = solve_poisson_neumann_zero_mean(rhs, cfg, stage="grad_primitive")
        psi = sol.comps[:, 0]
    else:
        raise ValueError(f"unknown grad-primitive method {method!r}")
    W = grid.trapezoid_weights()
    psi = psi - _wmean(psi, W, grid.volume).reshape((-1,) + (1,) * n)
    out = VectorForm(grid, 0, psi[:, None])
    report.rel_residual = max(
        report.rel_residual,
        float(np.max(np.abs(ext_d(out).comps - f.comps)))
        / max(1.0, float(np.max(np.abs(f.comps)))),
    )
    return out, report


@dataclass
class ProjectionReport:
    solve: SolveReport
    div_rel: float


def helmholtz_project(w, cfg=None, quant_bits=50):
    """Split a vector 1-form into divergence-free part and gradient: w = a + d(phi).

    phi solves the zero-Dirichlet Poisson problem lap(phi) = codiff(w), is
    snapped onto a dyadic lattice (so that d(phi) and w - d(phi) are exact
    lattice arithmetic for lattice inputs, making ext_d(a) == ext_d(w)
    bitwise there), and a = w - ext_d(phi). d(a) = d(w) always holds since
    dd = 0; codiff(a) sits at solver-residual level on interior rows.
    """
    if not isinstance(w, VectorForm) or w.degree != 1:
        raise ValueError("Helmholtz projection expects a vector-valued 1-form")
    cfg = cfg or LinearSolverConfig()
    rhs = codiff(w)
    phi, report = solve_poisson_dirichlet(rhs, None, cfg, stage="helmholtz_potential")
    if quant_bits:
        phi = VectorForm(w.grid, 0, dyadic_quantize(phi.comps, quant_bits))
    a = w - ext_d(phi)
    inner = (slice(None),) * (w.comps.ndim - w.grid.n) + tuple(
        slice(1, -1) for _ in range(w.grid.n)
    )
    div = codiff(a).comps[inner]
    wnorm = float(np.sqrt(np.sum(w.comps**2)))
    div_rel = float(np.sqrt(np.sum(div**2))) / wnorm if wnorm > 0 else 0.0
    return a, phi, ProjectionReport(report, div_rel)
