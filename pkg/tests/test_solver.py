import math

import numpy as np
import pytest

from conftest import seeded_form
from reglift import corpus as C
from reglift import solver as S
from reglift.elliptic import LinearSolverConfig, helmholtz_project, solve_poisson_dirichlet
from reglift.forms import (
    MatrixForm,
    as_connection,
    codiff,
    devectorize,
    ext_d,
    identity_form,
    matmul0,
    vectorize,
)
from reglift.grid import Grid

DIRECT = LinearSolverConfig(method="direct", tol_rel=1e-11)


def cfg_direct(**kw):
    kw.setdefault("epsilon", 0.2)
    kw.setdefault("p", 6.0)
    kw.setdefault("linear", DIRECT)
    return S.SolverConfig(**kw)


class TestRescale:
    def test_constant_connection(self, g33):
        c = np.zeros((2, 2, 2) + g33.shape)
        c[0, 1, 0] = 1.5
        gamma = as_connection(MatrixForm(g33, 1, c))
        gs, sub = S.rescale(gamma, (0.5, 0.5), 0.5)
        assert sub.shape == (17, 17)
        assert np.all(gs.comps[0, 1, 0] == 1.5)
        # physical connection on the reference box is eps * Gamma*
        assert np.all((0.5 * gs.comps)[0, 1, 0] == 0.75)

    def test_epsilon_one_is_identity(self, g33):
        gamma = C.gen_manufactured(g33, 7, 0.8)
        gs, sub = S.rescale(gamma, (0.5, 0.5), 1.0)
        assert sub.shape == g33.shape
        assert np.array_equal(gs.comps, gamma.comps)

    def test_norm_scaling_exact(self, g33):
        # linear component: ||G*||_inf = ||G||_inf over the box and
        # ||dG*||_inf = eps ||dG||_inf exactly (node-aligned restriction)
        x = g33.points()
        c = np.zeros((2, 2, 2) + g33.shape)
        c[0, 0, 0] = x[0]
        gamma = as_connection(MatrixForm(g33, 1, c))
        gs, sub = S.rescale(gamma, (0.5, 0.5), 0.5)
        d_full = np.max(np.abs(ext_d(gamma).comps))
        d_sub = np.max(np.abs(ext_d(gs).comps))
        assert np.isclose(d_sub, 0.5 * d_full, rtol=1e-12)
        assert np.max(np.abs(gs.comps)) == 0.75  # sup over the half box

    def test_box_exit_rejected(self, g33):
        gamma = C.gen_manufactured(g33, 7, 0.8)
        with pytest.raises(S.RescaleError):
            S.rescale(gamma, (0.05, 0.5), 0.5)

    def test_non_aligned_falls_back_to_interpolation(self, g33):
        gamma = C.gen_manufactured(g33, 7, 0.8)
        gs, sub = S.rescale(gamma, (0.5, 0.5), 0.3)
        assert sub.shape == g33.shape  # resampled at full shape
        assert np.all(np.isfinite(gs.comps))


class TestSources:
    def test_zero_connection(self, g17):
        z = MatrixForm.zeros(g17, 0)
        Fu, w = S.assemble_sources(z, z, C.gen_flat(g17), 0.2)
        assert np.all(Fu.comps == 0.0)
        assert np.all(w.comps == 0.0)

    def test_zero_iterate(self, g33):
        gamma = C.gen_manufactured(g33, 7, 0.8)
        z = MatrixForm.zeros(g33, 0)
        a = 0.1 * seeded_form(g33, 0, 71)
        Fu, w = S.assemble_sources(z, a, gamma, 0.2)
        expect = codiff(gamma) - a
        assert np.allclose(Fu.comps, expect.comps, atol=1e-13)

    def test_matches_term_by_term(self, g33):
        # independent evaluation by linearity: codiff((I+eps u)G) =
        # codiff(G) + eps codiff(u.G)
        gamma = C.gen_manufactured(g33, 7, 0.8)
        u = 0.3 * seeded_form(g33, 0, 72)
        a = 0.1 * seeded_form(g33, 0, 73)
        eps = 0.2
        Fu, w = S.assemble_sources(u, a, gamma, eps)
        indep = codiff(gamma) + eps * codiff(matmul0(u, gamma)) - a
        assert np.max(np.abs(Fu.comps - indep.comps)) < 1e-12
        assert np.max(np.abs(w.comps - vectorize(indep + a).comps)) < 1e-12


class TestStep:
    def test_zero_fixed_point(self, g17):
        state = S.RTState.zero(g17)
        out = S.step(state, C.gen_flat(g17), cfg_direct())
        assert out.k == 1
        for f in (out.u, out.a, out.psi, out.y):
            assert np.all(f.comps == 0.0)

    def test_first_step_oracle(self, g33):
        # a_1 = divergence-free part of vec(codiff Gamma*); u_1 solves
        # lap u = codiff(Gamma*) - a_1 with boundary data d y_1
        gamma = C.gen_manufactured(g33, 7, 0.8)
        cfg = cfg_direct()
        out = S.step(S.RTState.zero(g33), gamma, cfg)
        w = vectorize(codiff(gamma))
        a_vec, phi, _ = helmholtz_project(w, DIRECT)
        assert np.max(np.abs(out.a.comps - devectorize(a_vec).comps)) < 1e-12
        bdata = devectorize(ext_d(out.y))
        u_ref, _ = solve_poisson_dirichlet(
            codiff(gamma) - out.a, bdata, DIRECT, hi_margin=2
        )
        assert np.max(np.abs(out.u.comps - u_ref.comps)) < 1e-11

    def test_history_record(self, g33):
        gamma = C.gen_manufactured(g33, 7, 0.8)
        cfg = cfg_direct()
        state = S.step(S.RTState.zero(g33), gamma, cfg)
        state = S.step(state, gamma, cfg)
        assert len(state.history) == state.k == 2
        rec = state.history[-1]
        assert rec.du_w1p > 0 and math.isfinite(rec.ratio)
        assert max(rec.lin_res_a, rec.lin_res_psi, rec.lin_res_y, rec.lin_res_u) < 1e-9


class TestInvertJacobian:
    def test_identity(self, g17):
        I = identity_form(g17)
        Jinv, info = S.invert_jacobian(I)
        assert np.array_equal(Jinv.comps, I.comps)
        assert info["min_abs_det"] == 1.0

    def test_neumann_series(self, g33):
        # ||J^-1 - (I - eps u)||_max = O(eps^2)
        u = seeded_form(g33, 0, 74)
        errs = []
        for eps in (0.08, 0.04, 0.02):
            J = identity_form(g33) + eps * u
            Jinv, _ = S.invert_jacobian(J)
            approx = identity_form(g33) + (-eps) * u
            errs.append(np.max(np.abs(Jinv.comps - approx.comps)) / eps**2)
        assert max(errs) / min(errs) < 2.0  # errors scale like eps^2

    def test_singular_rejected(self, g17):
        J = identity_form(g17)
        J.comps[0, 0, 0, 3, 4] = 0.0
        J.comps[0, 1, 0, 3, 4] = 0.0
        with pytest.raises(S.SingularJacobianError):
            S.invert_jacobian(J)


class TestCheckCurl:
    def test_identity_exact_zero(self, g17):
        rep = S.check_curl(identity_form(g17))
        assert rep.lp_res == 0.0 and rep.max_res == 0.0

    def test_coordinate_map_jacobian(self):
        prev = None
        for s in (17, 33, 65):
            _, J = C.gen_pure_gauge(Grid.unit((s, s)), 3, 0.4)
            rep = S.check_curl(J)
            if prev is not None:
                assert rep.max_res < prev
            prev = rep.max_res


class TestRun:
    def test_flat_converges_immediately(self, g33):
        sol = S.run_rescaled(C.gen_flat(g33), cfg_direct())
        assert sol.converged and sol.iterations == 1
        assert np.array_equal(sol.J.comps, identity_form(g33).comps)
        assert np.all(sol.B.comps == 0.0)
        assert np.all(sol.y.comps == 0.0)

    def test_pure_gauge_run(self, g33):
        gamma, _ = C.gen_pure_gauge(g33, 3, 0.4)
        sol = S.run_rescaled(gamma, cfg_direct(tol_iter=1e-11))
        assert sol.converged
        assert sol.diagnostics["curl_lp"] < 1e-11
        assert sol.diagnostics["map_defect"] < 1e-11
        assert sol.diagnostics["jjinv_err"] < 1e-12
        assert len(sol.history) == sol.iterations

    def test_divergence_raises_with_history(self, g17):
        gamma = C.gen_manufactured(g17, 5, 100.0)
        cfg = cfg_direct(epsilon=1.0, adaptive_epsilon=False, max_iter=10)
        with pytest.raises(S.NonConvergenceError) as exc:
            S.run_rescaled(gamma, cfg)
        ratios = [r for r in exc.value.history if math.isfinite(r)]
        assert ratios and max(ratios) > 1.0

    def test_adaptive_halving_recovers(self, g17):
        gamma = C.gen_manufactured(g17, 5, 100.0)
        cfg = cfg_direct(
            epsilon=1.0, adaptive_epsilon=True, max_iter=80, tol_iter=1e-8
        )
        sol = S.run_rescaled(gamma, cfg)
        assert sol.converged
        assert sol.epsilon < 1.0  # was halved at least once

    def test_full_run_with_rescale(self, g33):
        gamma, _ = C.gen_pure_gauge(g33, 3, 0.4)
        sol = S.run(gamma, (0.5, 0.5), cfg_direct(epsilon=0.5, tol_iter=1e-11))
        assert sol.converged
        assert sol.J.grid.shape == (17, 17)

    def test_pure_gauge_run_3d(self):
        g = Grid.unit((17, 17, 17))
        gamma, _ = C.gen_pure_gauge(g, 3, 0.3)
        cfg = S.SolverConfig(
            epsilon=0.2,
            p=6.0,
            linear=LinearSolverConfig(method="cg", tol_rel=1e-12),
            tol_iter=1e-10,
        )
        sol = S.run_rescaled(gamma, cfg)
        assert sol.converged
        assert sol.diagnostics["curl_lp"] < 1e-9
        assert sol.diagnostics["map_defect"] < 1e-9

    def test_history_csv_schema(self, g17, tmp_path):
        sol = S.run_rescaled(C.gen_manufactured(g17, 5, 0.5), cfg_direct())
        path = tmp_path / "hist.csv"
        sol.write_history_csv(path)
        header = path.read_text().splitlines()[0]
        assert header == "k,du_w1p,da_lp,ratio,lin_res_a,lin_res_psi,lin_res_y,lin_res_u"

    def test_config_validation(self):
        with pytest.raises(ValueError):
            S.SolverConfig(epsilon=0.0)
        with pytest.raises(ValueError):
            S.SolverConfig(epsilon=1.5)
        with pytest.raises(ValueError):
            S.SolverConfig(tol_iter=0.0)
        with pytest.raises(ValueError):
            S.run_rescaled(C.gen_flat(Grid.unit((9, 9))), cfg_direct(p=1.5))


def test_gauge_b_divergence_small(g33):
    # delta of the vectorized B sits at projection tolerance (w = 0 gauge)
    gamma, _ = C.gen_pure_gauge(g33, 3, 0.4)
    sol = S.run_rescaled(gamma, cfg_direct(tol_iter=1e-11))
    div = codiff(vectorize(sol.B))
    inner = np.max(np.abs(div.comps[..., 1:-1, 1:-1]))
    assert inner < 1e-8
