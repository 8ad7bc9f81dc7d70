"""The epsilon-rescaled fixed-point scheme for the Jacobian field.

Given a connection on the reference box, each sweep constructs, in order:

1. the divergence-free part a of w = vec(codiff(J_k . G)) via Helmholtz
   projection (this realizes the first-order system d(a_vec) = d(w),
   codiff(a_vec) = 0);
2. the zero-mean primitive Psi of the exact-gradient remainder w - a_vec
   (cross-checked against the Helmholtz potential);
3. y from lap(y) = Psi with zero Dirichlet data;
4. u_{k+1} from lap(u) = codiff(J_k . G) - a_{k+1} with Dirichlet data
   devec(ext_d y) on the boundary band (two layers on upper faces, which
   makes the discrete identity vec(u) = d(y) hold at solver precision and
   hence d(vec J) vanish there -- J is the Jacobian of x + eps*y).

The physical objects are J = I + eps*u and B = eps*a; the effective
connection is eps * gamma_star.
"""

import csv
import math
from dataclasses import dataclass, field, replace

import numpy as np

from .elliptic import (
    LinearSolverConfig,
    SolverFailure,
    helmholtz_project,
    solve_grad_primitive,
    solve_poisson_dirichlet,
)
from .forms import (
    Connection,
    MatrixForm,
    VectorForm,
    as_connection,
    codiff,
    devectorize,
    ext_d,
    identity_form,
    interpolate,
    lp_norm,
    matmul0,
    pointwise_inverse,
    vectorize,
    w1p_norm,
)
from .geometry import curl_residual
from .grid import Grid

CSV_HEADER = ["k", "du_w1p", "da_lp", "ratio", "lin_res_a", "lin_res_psi", "lin_res_y", "lin_res_u"]


class NonConvergenceError(RuntimeError):
    def __init__(self, message, history, partial=None):
        super().__init__(message)
        self.history = history
        self.partial = partial


class RescaleError(ValueError):
    pass


class SingularJacobianError(ValueError):
    pass


@dataclass
class SolverConfig:
    epsilon: float = 0.1
    p: float = 6.0
    max_iter: int = 40
    tol_iter: float = 1e-10
    linear: LinearSolverConfig = field(default_factory=LinearSolverConfig)
    adaptive_epsilon: bool = True
    max_halvings: int = 6
    det_floor: float = 1e-8

    def __post_init__(self):
        if not 0.0 < self.epsilon <= 1.0:
            raise ValueError("epsilon must lie in (0, 1]")
        if self.tol_iter <= 0:
            raise ValueError("tol_iter must be positive")
        if self.max_iter < 1:
            raise ValueError("max_iter must be >= 1")


@dataclass
class IterationRecord:
    k: int
    du_w1p: float
    da_lp: float
    ratio: float
    lin_res_a: float
    lin_res_psi: float
    lin_res_y: float
    lin_res_u: float

    def row(self):
        return [
            self.k,
            f"{self.du_w1p:.16e}",
            f"{self.da_lp:.16e}",
            f"{self.ratio:.16e}" if math.isfinite(self.ratio) else "",
            f"{self.lin_res_a:.3e}",
            f"{self.lin_res_psi:.3e}",
            f"{self.lin_res_y:.3e}",
            f"{self.lin_res_u:.3e}",
        ]


@dataclass
class RTState:
    k: int
    u: MatrixForm
    a: MatrixForm
    psi: VectorForm
    y: VectorForm
    history: list = field(default_factory=list)

    @classmethod
    def zero(cls, grid):
        return cls(
            k=0,
            u=MatrixForm.zeros(grid, 0),
            a=MatrixForm.zeros(grid, 0),
            psi=VectorForm.zeros(grid, 0),
            y=VectorForm.zeros(grid, 0),
        )


@dataclass
class RTSolution:
    J: MatrixForm
    Jinv: MatrixForm
    B: MatrixForm
    y: VectorForm
    gamma_star: Connection
    epsilon: float
    converged: bool
    iterations: int
    history: list
    diagnostics: dict
    state: RTState

    def gamma_effective(self):
        """The connection the Jacobian smooths: eps * gamma_star."""
        return as_connection(self.epsilon * self.gamma_star)

    def write_history_csv(self, path):
        with open(path, "w", newline="") as fh:
            wr = csv.writer(fh)
            wr.writerow(CSV_HEADER)
            for rec in self.history:
                wr.writerow(rec.row())


def rescale(gamma, q, epsilon):
    """Restrict gamma to the eps-box around q, re-expressed on the reference box.

    The components are transported as scalars (x = q + eps*(x~ - center)),
    so the physical connection on the reference box is eps * gamma_star.
    q snaps to the nearest node; when eps*(shape-1)/2 is an integer the
    restriction is an exact node-aligned copy, otherwise the components are
    resampled multilinearly at the mapped points on the full shape.
    """
    g = gamma.grid
    if not 0.0 < epsilon <= 1.0:
        raise RescaleError("epsilon must lie in (0, 1]")
    idx = g.nearest_node(q)
    qx = np.array(g.node_coords(idx))
    center = np.array([(a + b) / 2.0 for a, b in zip(g.lo, g.hi)])
    half = np.array([(b - a) / 2.0 for a, b in zip(g.lo, g.hi)])
    lo_box = qx - epsilon * half
    hi_box = qx + epsilon * half
    for j in range(g.n):
        if lo_box[j] < g.lo[j] - 1e-12 or hi_box[j] > g.hi[j] + 1e-12:
            raise RescaleError(
                f"epsilon-box around {tuple(qx)} exits the domain on axis {j}"
            )
    aligned = []
    for j in range(g.n):
        m = epsilon * (g.shape[j] - 1) / 2.0
        aligned.append(abs(m - round(m)) < 1e-9 and round(m) >= 1)
    if all(aligned):
        ms = [int(round(epsilon * (s - 1) / 2.0)) for s in g.shape]
        sl = tuple(slice(idx[j] - ms[j], idx[j] + ms[j] + 1) for j in range(g.n))
        comps = gamma.comps[(slice(None),) * 3 + sl].copy()
        sub = Grid(
            shape=tuple(2 * m + 1 for m in ms), lo=tuple(g.lo), hi=tuple(g.hi)
        )
    else:
        sub = Grid(shape=g.shape, lo=tuple(g.lo), hi=tuple(g.hi))
        ref_pts = sub.points()
        mapped = qx.reshape((-1,) + (1,) * g.n) + epsilon * (
            ref_pts - center.reshape((-1,) + (1,) * g.n)
        )
        comps = interpolate(gamma, mapped)
    return Connection(sub, 1, comps), sub


def assemble_sources(u_k, a_next, gamma_star, epsilon):
    """Strong-form sources: F_u = codiff((I + eps u_k) . G) - a_next and the
    primitive 1-form w_k = vec(codiff((I + eps u_k) . G))."""
    grid = gamma_star.grid
    Jk = identity_form(grid) + epsilon * u_k
    s0 = codiff(matmul0(Jk, gamma_star))
    w = vectorize(s0)
    return s0 - a_next, w


def step(state, gamma_star, cfg):
    """One sweep of the scheme; returns the advanced state."""
    grid = gamma_star.grid
    eps = cfg.epsilon
    Jk = identity_form(grid) + eps * state.u
    try:
        s0 = codiff(matmul0(Jk, gamma_star))
        w = vectorize(s0)
        a_vec, phi, prj = helmholtz_project(w, cfg.linear)
    except SolverFailure as exc:
        raise SolverFailure(f"stage a: {exc}", exc.report) from exc
    a_next = devectorize(a_vec)

    try:
        psi, rep_psi = solve_grad_primitive(w - a_vec)
    except SolverFailure as exc:
        raise SolverFailure(f"stage psi: {exc}", exc.report) from exc
    # cross-check: Psi equals the Helmholtz potential up to its mean
    W = grid.trapezoid_weights()
    pm = phi.comps - np.sum(phi.comps * W, axis=tuple(range(2, phi.comps.ndim)), keepdims=True) / grid.volume
    psi_dev = float(np.max(np.abs(psi.comps - pm)))

    try:
        y, rep_y = solve_poisson_dirichlet(psi, None, cfg.linear, stage="y")
    except SolverFailure as exc:
        raise SolverFailure(f"stage y: {exc}", exc.report) from exc

    bdata = devectorize(ext_d(y))
    Fu = s0 - a_next
    try:
        u_next, rep_u = solve_poisson_dirichlet(
            Fu, bdata, cfg.linear, hi_margin=2, stage="u"
        )
    except SolverFailure as exc:
        raise SolverFailure(f"stage u: {exc}", exc.report) from exc

    du = w1p_norm(u_next - state.u, cfg.p)
    da = lp_norm(a_next - state.a, cfg.p)
    prev = state.history[-1].du_w1p if state.history else math.nan
    ratio = du / prev if (state.history and prev > 0) else math.nan
    rec = IterationRecord(
        k=state.k + 1,
        du_w1p=du,
        da_lp=da,
        ratio=ratio,
        lin_res_a=max(prj.solve.rel_residual, prj.div_rel),
        lin_res_psi=max(rep_psi.rel_residual, psi_dev),
        lin_res_y=rep_y.rel_residual,
        lin_res_u=rep_u.rel_residual,
    )
    return RTState(
        k=state.k + 1,
        u=u_next,
        a=a_next,
        psi=psi,
        y=y,
        history=state.history + [rec],
    )


def invert_jacobian(J, det_floor=1e-8):
    """Pointwise inverse with a determinant floor; reports min |det| and
    the max identity defect ||J J^{-1} - I||_max."""
    try:
        Jinv, min_det = pointwise_inverse(J, det_floor)
    except ValueError as exc:
        raise SingularJacobianError(str(exc)) from exc
    prod = np.einsum("ab...,bc...->ac...", J.comps[:, :, 0], Jinv.comps[:, :, 0])
    for i in range(J.n):
        prod[i, i] -= 1.0
    return Jinv, {"min_abs_det": min_det, "jjinv_err": float(np.max(np.abs(prod)))}


@dataclass
class CurlReport:
    lp_res: float
    max_res: float
    map_defect: float = math.nan


def check_curl(J, y=None, epsilon=None, p=6.0):
    """Integrability of J: ||d(vec J)|| on clean interior rows, plus the
    defect ||vec(J) - ext_d(x + eps*y)||_max when y is supplied."""
    lp_res, max_res = curl_residual(J, p)
    map_defect = math.nan
    if y is not None and epsilon is not None:
        grid = J.grid
        m = grid.points() + epsilon * y.comps[:, 0]
        dm = ext_d(VectorForm(grid, 0, m[:, None]))
        map_defect = float(np.max(np.abs(devectorize(dm).comps - J.comps)))
    return CurlReport(lp_res, max_res, map_defect)


def run_rescaled(gamma_star, cfg):
    """Iterate the scheme on a given reference-box connection gamma_star.

    Converges when ||u_{k+1} - u_k||_{W^{1,p}} < tol_iter; with
    adaptive_epsilon, two consecutive ratios above 1 trigger an epsilon
    halving and restart (up to max_halvings). Divergence after all
    halvings raises NonConvergenceError with the ratio history.
    """
    gamma_star = as_connection(gamma_star)
    if cfg.p <= gamma_star.grid.n:
        raise ValueError("config exponent p must exceed the dimension")
    eps = cfg.epsilon
    attempts = 0
    while True:
        config = replace(cfg, epsilon=eps)
        state = RTState.zero(gamma_star.grid)
        diverged = False
        growing = 0
        converged = False
        for _ in range(cfg.max_iter):
            state = step(state, gamma_star, config)
            rec = state.history[-1]
            if rec.du_w1p < cfg.tol_iter:
                converged = True
                break
            if math.isfinite(rec.ratio) and rec.ratio > 1.0:
                growing += 1
                if growing >= 2:
                    diverged = True
                    break
            else:
                growing = 0
        if diverged and cfg.adaptive_epsilon and attempts < cfg.max_halvings:
            attempts += 1
            eps *= 0.5
            continue
        if diverged:
            raise NonConvergenceError(
                f"iteration diverging for epsilon down to {eps:.3e}",
                [r.ratio for r in state.history],
                partial=state,
            )
        return _finalize(gamma_star, state, config, converged)


def _finalize(gamma_star, state, cfg, converged):
    grid = gamma_star.grid
    eps = cfg.epsilon
    J = identity_form(grid) + eps * state.u
    Jinv, inv_info = invert_jacobian(J, cfg.det_floor)
    B = eps * state.a
    curl = check_curl(J, state.y, eps, cfg.p)
    diagnostics = {
        "epsilon": eps,
        "converged": converged,
        "iterations": state.k,
        "final_du_w1p": state.history[-1].du_w1p if state.history else 0.0,
        "curl_lp": curl.lp_res,
        "curl_max": curl.max_res,
        "map_defect": curl.map_defect,
        **inv_info,
    }
    return RTSolution(
        J=J,
        Jinv=Jinv,
        B=B,
        y=state.y,
        gamma_star=gamma_star,
        epsilon=eps,
        converged=converged,
        iterations=state.k,
        history=state.history,
        diagnostics=diagnostics,
        state=state,
    )


def run(gamma, q, cfg):
    """Full pipeline: rescale at q, iterate, assemble J = I + eps*u, B = eps*a.

    When adaptive halving shrinks epsilon, the restriction box shrinks with
    it, so the rescale is redone until the two agree.
    """
    eps = cfg.epsilon
    for _ in range(cfg.max_halvings + 1):
        gamma_star, _ = rescale(gamma, q, eps)
        sol = run_rescaled(gamma_star, replace(cfg, epsilon=eps))
        if sol.epsilon == eps:
            return sol
        eps = sol.epsilon
    raise NonConvergenceError(
        f"no stable epsilon found down to {eps:.3e}", [], partial=None
    )
