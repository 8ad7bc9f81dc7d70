"""Property suites behind `reglift verify` and the acceptance tests.

Each suite returns CheckRow records; a row knows its measured value, its
threshold and direction, and whether it passed. Suites run the same checks
at several resolutions and report measured convergence orders where the
contract is an order bound.
"""

import math
from dataclasses import dataclass

import numpy as np

from . import corpus, geometry
from .elliptic import (
    LinearSolverConfig,
    helmholtz_project,
    solve_grad_primitive,
    solve_poisson_dirichlet,
    solve_poisson_neumann_zero_mean,
)
from .forms import (
    MatrixForm,
    identity_form,
    VectorForm,
    as_connection,
    codiff,
    dyadic_quantize,
    ext_d,
    increasing_indices,
    l2_inner,
    lp_norm,
    mat_inner,
    matmul0,
    pointwise_inverse,
    restrict,
    stencil_laplacian,
    vec_div,
    vectorize,
    w1p_norm,
    wedge,
)
from .grid import Grid
from .solver import SolverConfig, run_rescaled

P_DEFAULT = 6.0


@dataclass
class CheckRow:
    name: str
    value: float
    threshold: float
    mode: str  # 'le' or 'ge'
    passed: bool
    detail: str = ""


def _row(name, value, threshold, mode="le", detail=""):
    ok = value <= threshold if mode == "le" else value >= threshold
    return CheckRow(name, float(value), float(threshold), mode, bool(ok), detail)


def _orders(vals):
    return [math.log2(a / b) if b > 0 else math.inf for a, b in zip(vals, vals[1:])]


def _mean_order(vals):
    o = _orders(vals)
    return sum(o) / len(o)


def _rand_form(grid, degree, seed, cls=MatrixForm, stream=91):
    lead = cls._lead_shape(grid.n)
    nI = len(increasing_indices(grid.n, degree))
    count = int(np.prod(lead)) * nI * grid.npoints
    vals = corpus.uniform_stream(seed, stream, count) * 2.0 - 1.0
    return cls(grid, degree, vals.reshape(lead + (nI,) + grid.shape))


def _smooth_1form(grid, seed):
    # kmax=1: fully resolved at 17^2 so measured orders sit in the asymptotic regime
    return corpus.gen_manufactured(grid, seed, 0.8, kmax=1)


def _smooth_J(grid, seed):
    _, J = corpus.gen_pure_gauge(grid, seed, 0.4)
    return J


def format_table(rows):
    w = max(len(r.name) for r in rows) + 2
    lines = []
    for r in rows:
        op = "<=" if r.mode == "le" else ">="
        status = "PASS" if r.passed else "FAIL"
        extra = f"  [{r.detail}]" if r.detail else ""
        lines.append(
            f"{status}  {r.name:<{w}} {r.value: .6e} {op} {r.threshold:.3e}{extra}"
        )
    return "\n".join(lines)


# ---------------------------------------------------------------------------
# calculus


def suite_calculus(res=(17, 33, 65), p=P_DEFAULT):
    rows = []
    grids2 = [Grid.unit((s, s)) for s in res]
    grid3 = Grid.unit((9, 9, 9))

    # exact identities at every tested resolution (criterion 1)
    dd_worst = dd_scale = 0.0
    cc_worst = 0.0
    sbp_worst = 0.0
    lap_worst = 0.0
    cases = [(g, k) for g in grids2 for k in (0,)] + [(grid3, k) for k in (0, 1)]
    for i, (g, k) in enumerate(cases):
        w = _rand_form(g, k, seed=100 + i)
        ddw = ext_d(ext_d(w))
        scale = float(np.max(np.abs(w.comps))) * (2.0 / min(g.h)) ** 2
        dd_worst = max(dd_worst, float(np.max(np.abs(ddw.comps))) / scale)
    rows.append(_row("dd_zero_rel", dd_worst, 1e-12))

    cases = [(g, g.n) for g in grids2] + [(grid3, 2), (grid3, 3)]
    for i, (g, k) in enumerate(cases):
        w = _rand_form(g, k, seed=200 + i)
        ccw = codiff(codiff(w))
        scale = float(np.max(np.abs(w.comps))) * (2.0 / min(g.h)) ** 2
        cc_worst = max(cc_worst, float(np.max(np.abs(ccw.comps))) / scale)
    rows.append(_row("codiff_codiff_zero_rel", cc_worst, 1e-12))

    for i, (g, k) in enumerate([(g, k) for g in grids2 for k in (0, 1)] + [(grid3, 1)]):
        u = _rand_form(g, k, seed=300 + i)
        w = _rand_form(g, k + 1, seed=400 + i)
        # compact support: zero the two outermost layers
        for f in (u, w):
            mask = np.zeros(g.shape, dtype=bool)
            mask[(slice(2, -2),) * g.n] = True
            f.comps *= mask
        t1 = l2_inner(ext_d(u), w)
        t2 = l2_inner(u, codiff(w))
        sbp_worst = max(sbp_worst, abs(t1 + t2) / (abs(t1) + abs(t2) + 1e-300))
    rows.append(_row("summation_by_parts_rel", sbp_worst, 1e-12))

    for i, g in enumerate(grids2 + [grid3]):
        f = _rand_form(g, 0, seed=500 + i)
        lap1 = codiff(ext_d(f))
        lap2 = stencil_laplacian(f)
        inner = (slice(None),) * 3 + (slice(1, -1),) * g.n
        num = float(np.max(np.abs(lap1.comps[inner] - lap2.comps[inner])))
        den = float(np.max(np.abs(lap2.comps[inner])))
        lap_worst = max(lap_worst, num / den)
    rows.append(_row("laplacian_equals_stencil_rel", lap_worst, 1e-12))

    g = grids2[-1]
    f = _rand_form(g, 0, seed=601)
    va = vectorize(stencil_laplacian(f))
    vb = stencil_laplacian(vectorize(f))
    rows.append(
        _row(
            "vectorize_commutes_laplacian",
            float(np.max(np.abs(va.comps - vb.comps))),
            0.0,
            detail="bitwise",
        )
    )
    # composite Hodge Laplacian (d codiff + codiff d) commutes with vec too,
    # up to the reassociation rounding of the cross terms
    va = vectorize(codiff(ext_d(f)))
    w = vectorize(f)
    vb = codiff(ext_d(w)) + ext_d(codiff(w))
    inner = (slice(None), slice(None)) + (slice(1, -1),) * g.n
    num = float(np.max(np.abs(va.comps[inner] - vb.comps[inner])))
    den = float(np.max(np.abs(vb.comps[inner])))
    rows.append(_row("vectorize_commutes_hodge_rel", num / den, 1e-12))

    # Leibniz / commutation convergence (criterion 2)
    leib_d, leib_delta, leib_j, miracle = [], [], [], []
    for s, g in zip(res, grids2):
        w1 = _smooth_1form(g, 31)
        J = _smooth_J(g, 33)
        # k = 1, l = 0: d(w ^ J) = dw ^ J - w ^ dJ
        r = ext_d(wedge(w1, J)) - (wedge(ext_d(w1), J) - wedge(w1, ext_d(J)))
        leib_d.append(lp_norm(restrict(r, 2), p))
        r = codiff(matmul0(J, w1)) - matmul0(J, codiff(w1)) - mat_inner(ext_d(J), w1)
        leib_delta.append(lp_norm(restrict(r, 2), p))
        Jinv, _ = pointwise_inverse(J, 1e-10)
        r = ext_d(matmul0(Jinv, ext_d(J))) - wedge(ext_d(Jinv), ext_d(J))
        leib_j.append(lp_norm(restrict(r, 2), p))
        r = ext_d(vectorize(codiff(matmul0(J, w1)))) - vec_div(
            wedge(ext_d(J), w1)
        ) - vec_div(matmul0(J, ext_d(w1)))
        miracle.append(lp_norm(restrict(r, 2), p))
    rows.append(_row("leibniz_d_order", _mean_order(leib_d), 0.9, "ge"))
    rows.append(_row("leibniz_codiff_order", _mean_order(leib_delta), 0.9, "ge"))
    rows.append(_row("leibniz_jinv_dj_order", _mean_order(leib_j), 0.9, "ge"))
    rows.append(_row("div_codiff_commutation_order", _mean_order(miracle), 0.9, "ge"))
    return rows


# ---------------------------------------------------------------------------
# elliptic


def suite_elliptic(res=(17, 33, 65), p=P_DEFAULT):
    rows = []
    cfg = LinearSolverConfig(method="cg", tol_rel=1e-12)
    dir_err, neu_err = [], []
    for s in res:
        g = Grid.unit((s, s))
        x = g.points()
        ustar = np.sin(np.pi * x[0]) * np.sin(np.pi * x[1])
        f = VectorForm(g, 0, (-2.0 * np.pi**2 * ustar)[None, None].repeat(2, axis=0))
        u, _ = solve_poisson_dirichlet(f, None, cfg)
        dir_err.append(float(np.max(np.abs(u.comps[0, 0] - ustar))))
        ustar = -np.cos(np.pi * x[0]) / np.pi**2
        f = VectorForm(g, 0, (np.cos(np.pi * x[0]))[None, None].repeat(2, axis=0))
        u, _ = solve_poisson_neumann_zero_mean(f, cfg)
        neu_err.append(float(np.max(np.abs(u.comps[0, 0] - ustar))))
    rows.append(_row("poisson_dirichlet_order", _mean_order(dir_err), 1.9, "ge"))
    rows.append(_row("poisson_neumann_order", _mean_order(neu_err), 1.9, "ge"))

    # Helmholtz projection (criterion 3): lattice input, direct factorization
    g = Grid.unit((65, 65))
    dcfg = LinearSolverConfig(method="direct", tol_rel=1e-11)
    w = _rand_smooth_vector1(g, 71)
    a, phi, prj = helmholtz_project(w, dcfg)
    da, dw = ext_d(a), ext_d(w)
    inner = (slice(None), slice(None)) + (slice(0, -1),) * g.n
    bit = 0.0 if np.array_equal(da.comps[inner], dw.comps[inner]) else 1.0
    rows.append(_row("helmholtz_d_preserved_bitwise", bit, 0.0, detail="0 = bit-identical"))
    rows.append(_row("helmholtz_div_rel", prj.div_rel, 10.0 * dcfg.tol_rel))

    a2, _, prj2 = helmholtz_project(a, dcfg)
    rel = float(np.max(np.abs(a2.comps - a.comps))) / float(np.max(np.abs(a.comps)))
    rows.append(_row("helmholtz_idempotent_rel", rel, 1e-9))

    # dual-route primitive: both the path integral and the least-squares
    # Neumann route reconstruct an exact discrete gradient to solver precision
    gs = Grid.unit((33, 33))
    xs = gs.points()
    phi_star = np.stack(
        [np.cos(np.pi * xs[0]) * np.cos(np.pi * xs[1]), np.cos(2 * np.pi * xs[1])]
    )
    W = gs.trapezoid_weights()
    pm = phi_star - (phi_star * W).sum(axis=(-2, -1), keepdims=True) / gs.volume
    fstar = ext_d(VectorForm(gs, 0, phi_star[:, None]))
    p1, _ = solve_grad_primitive(fstar, method="path")
    p2, _ = solve_grad_primitive(fstar, method="poisson", cfg=cfg)
    rows.append(
        _row("grad_primitive_path_exact", float(np.max(np.abs(p1.comps[:, 0] - pm))), 1e-12)
    )
    rows.append(
        _row("grad_primitive_poisson_exact", float(np.max(np.abs(p2.comps[:, 0] - pm))), 1e-9)
    )

    # discrete maximum principle, f = 0, random boundary data
    g = Grid.unit((33, 33))
    bvals = _rand_form(g, 0, seed=81, cls=VectorForm)
    mask = np.zeros(g.shape, dtype=bool)
    mask[(slice(1, -1),) * g.n] = True
    gb = VectorForm(g, 0, bvals.comps * ~mask)
    zero = VectorForm.zeros(g, 0)
    u, rep = solve_poisson_dirichlet(zero, gb, cfg)
    viol = max(
        float(np.max(u.comps) - np.max(gb.comps)),
        float(np.min(gb.comps) - np.min(u.comps)),
    )
    rows.append(_row("dirichlet_max_principle", viol, 1e-10))
    hist = rep.residual_history
    mono = max(
        (b - a) / (abs(a) + 1e-300) for a, b in zip(hist, hist[1:])
    ) if len(hist) > 1 else 0.0
    rows.append(_row("cg_residual_monotone", mono, 1e-12))
    return rows


def _rand_smooth_vector1(grid, seed):
    """Smooth random vector 1-form on the dyadic lattice."""
    tab = corpus.TrigTable(seed, 7, grid.n * grid.n, 1.0, grid.n, terms=3, kmax=2)
    vals = tab.eval(grid.points()).reshape((grid.n, grid.n) + grid.shape)
    return VectorForm(grid, 1, dyadic_quantize(vals, 40))


# ---------------------------------------------------------------------------
# gauge (solver identities)


def _norm_manufactured(grid, seed):
    gam = corpus.gen_manufactured(grid, seed, 1.0)
    M = lp_norm(gam, np.inf) + lp_norm(ext_d(gam), np.inf)
    return as_connection(gam * (1.0 / M))


def suite_gauge(res=(33, 65, 129), p=P_DEFAULT, eps_set=(0.05, 0.1, 0.2)):
    rows = []
    lin = LinearSolverConfig(method="direct", tol_rel=1e-11)

    # contraction linearity (criterion 4)
    g = Grid.unit((33, 33))
    gam = _norm_manufactured(g, 5)
    ratios = {}
    for eps in eps_set:
        cfg = SolverConfig(epsilon=eps, p=p, linear=lin, tol_iter=1e-13, max_iter=12)
        sol = run_rescaled(gam, cfg)
        ratios[eps] = sol.history[1].ratio
    scaled = [ratios[e] / e for e in eps_set]
    rows.append(_row("contraction_ratio_spread", max(scaled) / min(scaled), 1.3))
    rows.append(_row("contraction_converges_smallest_eps", ratios[min(eps_set)], 1.0))

    # integrability (criterion 5)
    cfg = SolverConfig(epsilon=0.2, p=p, linear=lin, tol_iter=1e-11)
    sol = run_rescaled(gam, cfg)
    scale = max(1.0, w1p_norm(sol.J, p))
    rows.append(
        _row("integrability_curl_lp", sol.diagnostics["curl_lp"] / scale, 10.0 * lin.tol_rel)
    )
    rows.append(
        _row("integrability_map_defect", sol.diagnostics["map_defect"], min(g.h))
    )

    # gauge identity decay on pure-gauge runs (criterion 6)
    did, frt, bdiv = [], [], []
    for s in res:
        gs = Grid.unit((s, s))
        gam_pg, _ = corpus.gen_pure_gauge(gs, 3, 0.4)
        cfg = SolverConfig(epsilon=0.2, p=p, linear=lin, tol_iter=1e-12)
        sol = run_rescaled(gam_pg, cfg)
        geff = sol.gamma_effective()
        gf = geometry.gauge_fields(geff, sol.J, sol.Jinv, sol.B)
        d = geometry.rt_residuals(geff, sol, gf, p)
        did.append(d.delta_identity_res)
        frt.append(d.first_rt_res)
        bdiv.append(d.parts["reduced_b_div"])
    rows.append(_row("delta_identity_order", _mean_order(did), 0.9, "ge"))
    rows.append(_row("first_rt_order", _mean_order(frt), 0.5, "ge"))
    rows.append(_row("gauge_b_divergence", max(bdiv), 1e-8))

    # scaling consistency: (gamma*, eps) vs (2 gamma*, eps/2) give the same J
    cfg_a = SolverConfig(epsilon=0.2, p=p, linear=lin, tol_iter=1e-12)
    cfg_b = SolverConfig(epsilon=0.1, p=p, linear=lin, tol_iter=1e-12)
    sol_a = run_rescaled(gam, cfg_a)
    sol_b = run_rescaled(as_connection(2.0 * gam), cfg_b)
    gap = float(np.max(np.abs(sol_a.J.comps - sol_b.J.comps)))
    rows.append(_row("scaling_consistency_J", gap, 1e-12))
    return rows


# ---------------------------------------------------------------------------
# roundtrip (roughen -> smooth, locally inertial)


def suite_roundtrip(res=(17, 33, 65), p=P_DEFAULT, seed=11, amplitude=0.5):
    rows = []
    lin = LinearSolverConfig(method="direct", tol_rel=1e-11)
    cfg = SolverConfig(epsilon=0.2, p=p, linear=lin, tol_iter=1e-11)
    rough_forms, gy_forms, rf = [], [], []
    for s in res:
        g = Grid.unit((s, s))
        rough, _, _ = corpus.gen_roughened(g, seed, amplitude)
        sol = run_rescaled(rough, cfg)
        geff = sol.gamma_effective()
        gt = geometry.gamma_tilde(geff, sol.J, sol.Jinv)
        gy = geometry.transform_connection(gt, sol.J, sol.Jinv)
        m = geometry.interior_margin(g)
        rough_forms.append(restrict(geff, m))
        gy_forms.append(restrict(gy, m))
        rf.append(lp_norm(restrict(geometry.riemann(as_connection(geff - gt)), m), p))
    ind_rough = geometry.regularity_indicator(rough_forms, p)
    ind_gy = geometry.regularity_indicator(gy_forms, p)
    rows.append(
        _row(
            "roundtrip_rate_gap",
            ind_rough["rate"] - ind_gy["rate"],
            0.5,
            "ge",
            detail=f"rough={ind_rough['rate']:.3f} smooth={ind_gy['rate']:.3f}",
        )
    )
    rows.append(
        _row("riemann_flat_decay", rf[-1] / rf[0], 0.8, detail="finest/coarsest")
    )

    # locally inertial frames (criterion 8) on a smooth torsion-free field
    g = Grid.unit((129, 129))
    gy = corpus.symmetrize_lower(corpus.gen_manufactured(g, 5, 0.7))
    frame = geometry.locally_inertial(gy, (0.53, 0.47), p)
    rel = frame.report["gamma_z_at_q"] / frame.report["gamma_y_sup"]
    rows.append(_row("inertial_gamma_z_at_q_rel", rel, 1e-6))
    rows.append(
        _row("inertial_growth_exponent", frame.report["growth_exponent"], 0.9, "ge")
    )
    # trivial case: zero connection stays zero
    z = corpus.gen_flat(Grid.unit((17, 17)))
    fz = geometry.locally_inertial(z, (0.5, 0.5), p)
    rows.append(_row("inertial_flat_trivial", fz.report["gamma_z_at_q"], 0.0))
    return rows


# ---------------------------------------------------------------------------
# family (uniform bound + determinism)


def suite_family(res=(17, 33), p=P_DEFAULT, count=10, M=1.0, seed=23):
    rows = []
    lin = LinearSolverConfig(method="direct", tol_rel=1e-11)
    cfg = SolverConfig(epsilon=0.2, p=p, linear=lin, tol_iter=1e-10)
    bounds = []
    sol_consts = []
    for i in range(count):
        per_level = []
        for s in res:
            g = Grid.unit((s, s))
            members = corpus.gen_family(g, seed, M, count, p=p)
            gam = members[i]
            sol = run_rescaled(gam, cfg)
            gt = geometry.gamma_tilde(sol.gamma_effective(), sol.J, sol.Jinv)
            gy = geometry.transform_connection(gt, sol.J, sol.Jinv)
            m = geometry.interior_margin(g)
            per_level.append(w1p_norm(restrict(gy, m), p))
            # measured constant in the solution bound
            # ||I-J|| + ||I-Jinv|| + ||B|| <= C (||G|| + ||dG||)
            geff = sol.gamma_effective()
            I = identity_form(g)
            num = (
                w1p_norm(sol.J - I, 2 * p)
                + w1p_norm(sol.Jinv - I, 2 * p)
                + lp_norm(sol.B, p)
            )
            den = lp_norm(geff, np.inf) + lp_norm(ext_d(geff), p)
            sol_consts.append(num / den if den > 0 else 0.0)
        bounds.append(max(per_level))
    rows.append(_row("family_uniform_bound", max(bounds), 10.0 * M))
    rows.append(_row("family_bound_spread", max(bounds) / min(bounds), 10.0))
    rows.append(
        _row(
            "family_solution_bound_constant",
            max(sol_consts),
            100.0,
            detail=f"min={min(sol_consts):.3f} (measured, not predicted)",
        )
    )

    # norm bound holds for every member after normalization
    g = Grid.unit((17, 17))
    members = corpus.gen_family(g, seed, M, count, p=p)
    worst = max(lp_norm(m_, np.inf) + lp_norm(ext_d(m_), p) for m_ in members)
    rows.append(_row("family_norm_bound", worst, M * (1.0 + 1e-9)))

    # determinism: identical CaseSpec -> bit-identical fields
    a = corpus.gen_manufactured(g, 7, 1.0)
    b = corpus.gen_manufactured(g, 7, 1.0)
    rows.append(
        _row(
            "generator_determinism",
            0.0 if np.array_equal(a.comps, b.comps) else 1.0,
            0.0,
        )
    )
    return rows


SUITES = {
    "calculus": suite_calculus,
    "elliptic": suite_elliptic,
    "gauge": suite_gauge,
    "roundtrip": suite_roundtrip,
    "family": suite_family,
}


def run_suite(name, **kwargs):
    if name not in SUITES:
        raise KeyError(f"unknown suite {name!r}; choose from {sorted(SUITES)}")
    return SUITES[name](**kwargs)
