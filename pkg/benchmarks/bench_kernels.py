"""Benchmark the compiled stencil kernels against the numpy fallback.

Times the two hot kernels (axis differences, -Laplacian matvec) and a fixed
conjugate-residual iteration budget built on each matvec. Run:

    python benchmarks/bench_kernels.py
"""

import time

import numpy as np

from reglift import _kernels_py

try:
    from reglift import _stencil
except ImportError:
    _stencil = None


def timeit(fn, *args, repeat=20):
    fn(*args)  # warm up
    best = float("inf")
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn(*args)
        best = min(best, time.perf_counter() - t0)
    return best


def native_diff(a, axis, inv_h):
    if a.ndim == 3:
        return _stencil.diff_fwd_2d(a, axis, inv_h)
    return _stencil.diff_fwd_3d(a, axis, inv_h)


def native_lap(x, w):
    if x.ndim == 3:
        return _stencil.neglap_2d(x, w[0], w[1], False)
    return _stencil.neglap_3d(x, w[0], w[1], w[2], False)


def py_lap(x, w):
    return _kernels_py.neglap_dirichlet(x, w)


def cr_iterations(matvec, b, iters=200):
    x = np.zeros_like(b)
    r = b.copy()
    p = r.copy()
    Ar = matvec(r)
    Ap = Ar.copy()
    rAr = float(np.dot(r.ravel(), Ar.ravel()))
    for _ in range(iters):
        pAp = float(np.dot(Ap.ravel(), Ap.ravel()))
        alpha = rAr / pAp
        x += alpha * p
        r -= alpha * Ap
        Ar = matvec(r)
        rAr_new = float(np.dot(r.ravel(), Ar.ravel()))
        beta = rAr_new / rAr
        p = r + beta * p
        Ap = Ar + beta * Ap
        rAr = rAr_new
    return x


def main():
    rng = np.random.default_rng(0)
    cases = [
        ("2d 129^2 x4 comps", (4, 129, 129), (128.0**2, 128.0**2)),
        ("3d 33^3 x4 comps", (4, 33, 33, 33), (32.0**2,) * 3),
    ]
    print(f"{'case':<22} {'kernel':<12} {'python':>10} {'native':>10} {'speedup':>8}")
    for name, shape, w in cases:
        a = rng.standard_normal(shape)
        t_py = timeit(_kernels_py.diff_fwd, a, 0, 16.0)
        t_nat = timeit(native_diff, a, 0, 16.0) if _stencil else float("nan")
        print(
            f"{name:<22} {'diff_fwd':<12} {t_py*1e3:>8.3f}ms {t_nat*1e3:>8.3f}ms "
            f"{t_py / t_nat:>7.2f}x"
            if _stencil
            else f"{name:<22} {'diff_fwd':<12} {t_py*1e3:>8.3f}ms   (no native)"
        )
        t_py = timeit(py_lap, a, w)
        t_nat = timeit(native_lap, a, w) if _stencil else float("nan")
        print(
            f"{name:<22} {'neglap':<12} {t_py*1e3:>8.3f}ms {t_nat*1e3:>8.3f}ms "
            f"{t_py / t_nat:>7.2f}x"
            if _stencil
            else f"{name:<22} {'neglap':<12} {t_py*1e3:>8.3f}ms   (no native)"
        )

    # end-to-end matvec cost inside a fixed CR budget (single component)
    b = rng.standard_normal((127, 127))
    w2 = (128.0**2, 128.0**2)
    t_py = timeit(
        lambda: cr_iterations(lambda v: _kernels_py.neglap_dirichlet(v[None], w2)[0], b),
        repeat=3,
    )
    if _stencil:
        t_nat = timeit(
            lambda: cr_iterations(
                lambda v: _stencil.neglap_2d(v[None], w2[0], w2[1], False)[0], b
            ),
            repeat=3,
        )
        print(
            f"{'CR 200 iters 127^2':<22} {'solve':<12} {t_py*1e3:>8.1f}ms "
            f"{t_nat*1e3:>8.1f}ms {t_py / t_nat:>7.2f}x"
        )
        xa = cr_iterations(lambda v: _kernels_py.neglap_dirichlet(v[None], w2)[0], b)
        xb = cr_iterations(
            lambda v: _stencil.neglap_2d(v[None], w2[0], w2[1], False)[0], b
        )
        print(f"backends bit-identical after 200 iterations: {np.array_equal(xa, xb)}")
    else:
        print(f"{'CR 200 iters 127^2':<22} {'solve':<12} {t_py*1e3:>8.1f}ms   (no native)")


if __name__ == "__main__":
    main()
