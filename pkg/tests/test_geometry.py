import numpy as np
import pytest

from conftest import seeded_form
from reglift import corpus as C
from reglift import geometry as G
from reglift.forms import (
    Connection,
    MatrixForm,
    as_connection,
    ext_d,
    identity_form,
    lp_norm,
    mat_inner,
    matmul0,
    pointwise_inverse,
)
from reglift.grid import Grid


def pure_gauge(grid, seed=3, amp=0.4):
    gamma, J = C.gen_pure_gauge(grid, seed, amp)
    Jinv, _ = pointwise_inverse(J, 1e-10)
    return gamma, J, Jinv


class TestRiemann:
    def test_flat(self, g17):
        assert np.all(G.riemann(C.gen_flat(g17)).comps == 0.0)

    def test_constant_commutator(self, g17):
        A = np.array([[0.0, 1.0], [0.0, 0.0]])
        B = np.array([[0.0, 0.0], [1.0, 0.0]])
        c = np.zeros((2, 2, 2) + g17.shape)
        c[:, :, 0] = A[:, :, None, None]
        c[:, :, 1] = B[:, :, None, None]
        R = G.riemann(Connection(g17, 1, c))
        comm = A @ B - B @ A
        assert np.allclose(R.comps[:, :, 0], comm[:, :, None, None], atol=1e-14)

    def test_pure_gauge_first_order(self):
        prev = None
        for s in (17, 33, 65):
            gamma, _, _ = pure_gauge(Grid.unit((s, s)))
            r = lp_norm(G.riemann(gamma), 6.0)
            if prev is not None:
                assert np.log2(prev / r) > 0.8
            prev = r

    def test_tensorial_under_smooth_pullback(self):
        # ||Riem(pullback(G)) - K-transform of Riem(G)|| = O(h)
        from reglift.forms import interpolate

        tab = C.manufactured_table(7, 0.8, 2)

        def ref_eval(pts):
            v = tab.eval(pts).reshape((2, 2, 2) + pts.shape[1:])
            return 0.5 * (v + np.swapaxes(v, 1, 2))

        def fwd(pts):
            out = np.array(pts, copy=True)
            out[0] = pts[0] + 0.1 * np.sin(np.pi * pts[0]) * np.sin(np.pi * pts[1])
            return out

        def jac(pts):
            K = np.zeros((2, 2) + pts.shape[1:])
            K[0, 0] = 1 + 0.1 * np.pi * np.cos(np.pi * pts[0]) * np.sin(np.pi * pts[1])
            K[0, 1] = 0.1 * np.pi * np.sin(np.pi * pts[0]) * np.cos(np.pi * pts[1])
            K[1, 1] = 1.0
            return K

        errs = []
        for s in (33, 65):
            g = Grid.unit((s, s))
            cmap = G.CoordinateMap(g, forward=fwd, jacobian=jac)
            R_new = G.riemann(G.pullback_connection(ref_eval, cmap))
            smooth = Connection(g, 1, ref_eval(g.points()))
            pts = g.points()
            Rs = interpolate(G.riemann(smooth), fwd(pts))
            K = MatrixForm(g, 0, jac(pts)[:, :, None])
            Kinv, _ = pointwise_inverse(K, 1e-10)
            det = (
                K.comps[0, 0, 0] * K.comps[1, 1, 0]
                - K.comps[0, 1, 0] * K.comps[1, 0, 0]
            )
            expect = (
                np.einsum(
                    "ms...,sa...,an...->mn...",
                    Kinv.comps[:, :, 0],
                    Rs[:, :, 0],
                    K.comps[:, :, 0],
                )
                * det
            )
            errs.append(np.max(np.abs(R_new.comps[:, :, 0] - expect)))
        assert np.log2(errs[0] / errs[1]) > 0.8


class TestGammaTilde:
    def test_identity_jacobian(self, g33):
        gamma = C.gen_manufactured(g33, 7, 0.8)
        I = identity_form(g33)
        gt = G.gamma_tilde(gamma, I, I)
        assert np.array_equal(gt.comps, gamma.comps)

    def test_exact_cancellation(self, g33):
        gamma, J, Jinv = pure_gauge(g33)
        gt = G.gamma_tilde(gamma, J, Jinv)
        assert np.max(np.abs(gt.comps)) < 1e-10

    def test_riemann_flat_of_difference(self):
        prev = None
        for s in (17, 33, 65):
            g = Grid.unit((s, s))
            gamma = C.gen_manufactured(g, 7, 0.8)
            _, J, Jinv = pure_gauge(g, seed=9)
            gt = G.gamma_tilde(gamma, J, Jinv)
            r = lp_norm(G.riemann(as_connection(gamma - gt)), 6.0)
            if prev is not None:
                assert np.log2(prev / r) > 0.8
            prev = r


class TestTransform:
    def test_identity(self, g33):
        gamma = C.gen_manufactured(g33, 7, 0.8)
        I = identity_form(g33)
        out = G.transform_connection(gamma, I, I)
        assert np.allclose(out.comps, gamma.comps, atol=1e-14)

    def test_constant_scaling(self, g17):
        # J = cI: components scale by c * (1/c) * (1/c) = 1/c
        gamma = C.gen_manufactured(g17, 7, 0.8)
        c = 2.0
        J = identity_form(g17) * c
        Jinv = identity_form(g17) * (1.0 / c)
        out = G.transform_connection(gamma, J, Jinv)
        assert np.allclose(out.comps, gamma.comps / c, atol=1e-13)

    def test_roundtrip_via_pullback(self, g33):
        # transform by J then pull back with the same Jacobian field
        gamma = C.gen_manufactured(g33, 7, 0.8)
        _, J, Jinv = pure_gauge(g33, seed=9)
        gy = G.transform_connection(G.gamma_tilde(gamma, J, Jinv), J, Jinv)
        cmap = G.CoordinateMap(g33, forward=None, jacobian=J)
        back = G.pullback_connection(gy, cmap)
        err = np.max(np.abs(back.comps - gamma.comps))
        assert err < 20.0 * max(g33.h)


class TestPullback:
    def test_identity_map(self, g33):
        gamma = C.gen_manufactured(g33, 7, 0.8)
        out = G.pullback_connection(gamma, G.CoordinateMap(g33))
        assert np.allclose(out.comps, gamma.comps, atol=1e-12)

    def test_flat_pullback_is_pure_gauge(self, g33):
        def fwd(pts):
            out = np.array(pts, copy=True)
            out[0] = pts[0] + 0.05 * np.sin(np.pi * pts[0]) * np.sin(np.pi * pts[1])
            return out

        def zero_ref(pts):
            return np.zeros((2, 2, 2) + pts.shape[1:])

        prev = None
        for s in (17, 33, 65):
            g = Grid.unit((s, s))
            out = G.pullback_connection(zero_ref, G.CoordinateMap(g, forward=fwd))
            r = lp_norm(G.riemann(out), 6.0)
            if prev is not None:
                assert np.log2(prev / r) > 0.8
            prev = r

    def test_affine_rescaling(self):
        # map old = eps * new: components become eps * Gamma(eps x)
        eps = 0.25
        tab = C.manufactured_table(7, 0.8, 2)

        def ref_eval(pts):
            v = tab.eval(pts).reshape((2, 2, 2) + pts.shape[1:])
            return 0.5 * (v + np.swapaxes(v, 1, 2))

        g = Grid.unit((33, 33))
        cmap = G.CoordinateMap(
            g,
            forward=lambda pts: eps * pts,
            jacobian=lambda pts: np.broadcast_to(
                (eps * np.eye(2))[:, :, None, None], (2, 2) + pts.shape[1:]
            ).copy(),
        )
        out = G.pullback_connection(ref_eval, cmap)
        expect = eps * ref_eval(eps * g.points())
        assert np.max(np.abs(out.comps - expect)) < 1e-12

    def test_singular_jacobian_rejected(self, g17):
        gamma = C.gen_manufactured(g17, 7, 0.8)

        def bad_jac(pts):
            return np.zeros((2, 2) + pts.shape[1:])

        with pytest.raises(ValueError):
            G.pullback_connection(gamma, G.CoordinateMap(g17, jacobian=bad_jac))


class TestGaugeFields:
    def test_trivial(self, g17):
        gamma = C.gen_flat(g17)
        I = identity_form(g17)
        gf = G.gauge_fields(gamma, I, I, MatrixForm.zeros(g17, 0))
        assert np.all(gf.gamma_tilde.comps == 0.0)
        assert np.all(gf.A.comps == 0.0)
        assert np.all(gf.v.comps == 0.0)

    def test_lemma_both_sides(self, g33):
        # A = B - J <d(J^-1); dJ> - <dJ; Gamma> evaluated independently
        gamma = C.gen_manufactured(g33, 7, 0.8)
        _, J, Jinv = pure_gauge(g33, seed=9)
        B = 0.1 * seeded_form(g33, 0, 61)
        gf = G.gauge_fields(gamma, J, Jinv, B)
        dJ = ext_d(J)
        indep = (
            B.comps
            - matmul0(J, mat_inner(ext_d(Jinv), dJ)).comps
            - mat_inner(dJ, gamma).comps
        )
        err = np.max(np.abs(gf.A.comps - indep))
        assert err < 30.0 * max(g33.h)


class TestDiagnosticsAndIndicators:
    def test_riem_flat_monotone_in_noise(self, g33):
        # corrupting J raises the Riemann-flat residual monotonically
        gamma, J, Jinv = pure_gauge(g33)
        noise = seeded_form(g33, 0, 62)
        vals = []
        for amp in (0.0, 0.02, 0.05, 0.1):
            Jn = MatrixForm(g33, 0, J.comps + amp * noise.comps)
            Jninv, _ = pointwise_inverse(Jn, 1e-10)
            gt = G.gamma_tilde(gamma, Jn, Jninv)
            vals.append(lp_norm(G.riemann(as_connection(gamma - gt)), 6.0))
        assert all(b > a for a, b in zip(vals, vals[1:]))

    def test_norm_equivalence(self, g33):
        # ||dG||_p <= ||Riem(G)||_p + 2 ||G||_{2p}^2 on corpus connections
        p = 6.0
        for gamma in (
            C.gen_manufactured(g33, 7, 0.8),
            C.gen_pure_gauge(g33, 3, 0.4)[0],
            C.gen_roughened(g33, 11, 0.5)[0],
        ):
            lhs = lp_norm(ext_d(gamma), p)
            rhs = lp_norm(G.riemann(gamma), p) + 2.0 * lp_norm(gamma, 2 * p) ** 2
            assert lhs <= rhs

    def test_regularity_indicator_smooth(self):
        forms = [C.gen_manufactured(Grid.unit((s, s)), 7, 0.8) for s in (17, 33, 65)]
        ind = G.regularity_indicator(forms, 6.0)
        assert abs(ind["rate"]) < 0.1

    def test_regularity_indicator_step(self):
        # step discontinuity: W^{1,p} difference-quotient norm grows like
        # h^{-(p-1)/p} in the jump direction (1-d analytic computation)
        p = 6.0
        forms = []
        for s in (17, 33, 65, 129):
            g = Grid.unit((s, s))
            x = g.points()
            c = np.zeros((2, 2, 1) + g.shape)
            c[0, 0, 0] = np.where(x[0] > 0.5294, 1.0, 0.0)
            forms.append(MatrixForm(g, 0, c))
        ind = G.regularity_indicator(forms, p)
        assert abs(ind["rate"] - (p - 1) / p) < 0.1

    def test_too_few_levels(self, g17):
        with pytest.raises(ValueError):
            G.regularity_indicator([C.gen_flat(g17)], 6.0)


class TestLocallyInertial:
    def test_zero_connection(self, g17):
        frame = G.locally_inertial(C.gen_flat(g17), (0.5, 0.5), 6.0)
        assert frame.report["gamma_z_at_q"] == 0.0
        assert np.all(frame.quad_coeff == 0.0)

    def test_nulls_symmetric_connection_at_q(self):
        g = Grid.unit((65, 65))
        gy = C.symmetrize_lower(C.gen_manufactured(g, 5, 0.7))
        frame = G.locally_inertial(gy, (0.53, 0.47), 6.0)
        assert frame.report["gamma_z_at_q"] <= 1e-12 * frame.report["gamma_y_sup"]

    def test_growth_exponent_smooth(self):
        g = Grid.unit((129, 129))
        gy = C.symmetrize_lower(C.gen_manufactured(g, 5, 0.7))
        frame = G.locally_inertial(gy, (0.53, 0.47), 6.0)
        assert frame.report["growth_exponent"] >= 0.9

    def test_boundary_point_rejected(self, g17):
        with pytest.raises(ValueError):
            G.locally_inertial(C.gen_flat(g17), (0.0, 0.5), 6.0)
