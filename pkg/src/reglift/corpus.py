"""Deterministic, seedable generators of test connections with known structure.

Randomness contract (reproducible across platforms and languages): draws come
from the splitmix64 finalizer used counter-based,

    key       = mix64( seed * PHI  XOR  stream * MU )
    raw_i     = mix64( key + (i+1) * PHI )          i = 0, 1, 2, ...
    uniform_i = (raw_i >> 11) * 2^-53               in [0, 1)

with PHI = 0x9E3779B97F4A7C15, MU = 0xD1B54A32D192ED03 and mix64 the standard
splitmix64 finalizer (two xor-shift-multiply rounds, constants
0xBF58476D1CE4E5B9 and 0x94D049BB133111EB, final z ^ (z >> 31)); all
arithmetic is modulo 2^64. Generated fields are snapped onto a dyadic
lattice (40 bits below their max), so downstream difference arithmetic is
exact and regeneration is bit-identical.
"""

import math
from dataclasses import dataclass

import numpy as np

from .forms import (
    Connection,
    MatrixForm,
    dyadic_quantize,
    ext_d,
    lp_norm,
    matmul0,
    pointwise_inverse,
)
from .geometry import CoordinateMap, pullback_connection
from .grid import Grid

_PHI = np.uint64(0x9E3779B97F4A7C15)
_MU = np.uint64(0xD1B54A32D192ED03)
_C1 = np.uint64(0xBF58476D1CE4E5B9)
_C2 = np.uint64(0x94D049BB133111EB)

# stream tags
_S_MANUFACTURED = 1
_S_GAUGE = 2
_S_ROUGH_MAP = 3
_S_ROUGH_SMOOTH = 4
_S_FAMILY = 5


def _mix64(z):
    z = z.astype(np.uint64, copy=True) if isinstance(z, np.ndarray) else np.uint64(z)
    z = z ^ (z >> np.uint64(30))
    z = z * _C1
    z = z ^ (z >> np.uint64(27))
    z = z * _C2
    return z ^ (z >> np.uint64(31))


def uniform_stream(seed, stream, count):
    """``count`` uniforms in [0,1) for (seed, stream), per the module contract."""
    with np.errstate(over="ignore"):
        key = _mix64(np.uint64(seed % (1 << 64)) * _PHI ^ np.uint64(stream) * _MU)
        idx = np.arange(1, count + 1, dtype=np.uint64) * _PHI + key
        raw = _mix64(idx)
    return (raw >> np.uint64(11)).astype(np.float64) * 2.0**-53


@dataclass
class CaseSpec:
    kind: str
    seed: int
    amplitude: float
    grid: Grid
    family_size: int = 0
    bound_M: float = 0.0

    KINDS = ("flat", "pure-gauge", "manufactured", "roughened", "family")

    def __post_init__(self):
        if self.kind not in self.KINDS:
            raise ValueError(f"unknown case kind {self.kind!r}")
        if self.amplitude < 0:
            raise ValueError("amplitude must be >= 0")
        if self.kind == "family" and self.family_size < 2:
            raise ValueError("family needs family_size >= 2")

    def to_json(self):
        return {
            "kind": self.kind,
            "seed": self.seed,
            "amplitude": self.amplitude,
            "grid": {
                "shape": list(self.grid.shape),
                "lo": list(self.grid.lo),
                "hi": list(self.grid.hi),
            },
            "family_size": self.family_size,
            "bound_M": self.bound_M,
        }

    @classmethod
    def from_json(cls, data):
        g = data["grid"]
        return cls(
            kind=data["kind"],
            seed=int(data["seed"]),
            amplitude=float(data["amplitude"]),
            grid=Grid(tuple(g["shape"]), tuple(g["lo"]), tuple(g["hi"])),
            family_size=int(data.get("family_size", 0)),
            bound_M=float(data.get("bound_M", 0.0)),
        )


class TrigTable:
    """Finite trig series per component with closed-form partial derivatives.

    component c, term t:  amp[c,t] * prod_j sin(pi k[c,t,j] x_j + th[c,t,j])
    """

    def __init__(self, seed, stream, n_comps, amplitude, n, terms=2, kmax=2):
        self.n = n
        draws = uniform_stream(seed, stream, n_comps * terms * (1 + 2 * n))
        draws = draws.reshape(n_comps, terms, 1 + 2 * n)
        self.amp = (2.0 * draws[:, :, 0] - 1.0) * (amplitude / terms)
        self.k = np.floor(draws[:, :, 1 : 1 + n] * kmax).astype(np.int64) + 1
        self.th = draws[:, :, 1 + n :] * (2.0 * math.pi)

    def _factors(self, pts):
        # pts: (n, ...) -> sin/cos factor tables (C, T, n, ...)
        x = pts[None, None, :, ...]
        arg = math.pi * self.k.reshape(self.k.shape + (1,) * (pts.ndim - 1)) * x
        arg = arg + self.th.reshape(self.th.shape + (1,) * (pts.ndim - 1))
        return np.sin(arg), np.cos(arg)

    def eval(self, pts):
        s, _ = self._factors(pts)
        prod = np.prod(s, axis=2)
        amp = self.amp.reshape(self.amp.shape + (1,) * (pts.ndim - 1))
        return np.sum(amp * prod, axis=1)

    def eval_d(self, pts, axis):
        s, c = self._factors(pts)
        fac = s.copy()
        fac[:, :, axis] = c[:, :, axis]
        prod = np.prod(fac, axis=2)
        kfac = math.pi * self.k[:, :, axis].reshape(
            self.k.shape[:2] + (1,) * (pts.ndim - 1)
        )
        amp = self.amp.reshape(self.amp.shape + (1,) * (pts.ndim - 1))
        return np.sum(amp * kfac * prod, axis=1)


def manufactured_table(seed, amplitude, n, terms=2, kmax=2):
    """The trig coefficient table behind gen_manufactured for dimension n."""
    return TrigTable(seed, _S_MANUFACTURED, n * n * n, amplitude, n, terms, kmax)


def _connection_from_table(table, grid):
    # lower indices symmetrized: generated connections are torsion-free,
    # the class the commutation identity d(vec(codiff .)) = div(d .) holds for
    n = grid.n
    vals = table.eval(grid.points()).reshape(n, n, n, *grid.shape)
    comps = 0.5 * (vals + np.swapaxes(vals, 1, 2))
    return Connection(grid, 1, dyadic_quantize(comps))


def manufactured_ext_d(table, grid):
    """Closed-form d(Gamma) of the manufactured connection, sampled on grid."""
    n = grid.n
    pts = grid.points()
    partial = np.stack([table.eval_d(pts, ax) for ax in range(n)], axis=1)
    partial = partial.reshape(n, n, n, n, *grid.shape)  # [mu, nu, j, d-axis, x]
    partial = 0.5 * (partial + np.swapaxes(partial, 1, 2))
    from .forms import index_position

    pos = index_position(n, 2)
    out = np.zeros((n, n, len(pos)) + grid.shape)
    for (i, j), pij in pos.items():
        out[:, :, pij] = partial[:, :, j, i] - partial[:, :, i, j]
    return MatrixForm(grid, 2, out)


def gen_flat(grid):
    """The zero connection."""
    return Connection.zeros(grid)


def symmetrize_lower(conn):
    """Torsion-free part: symmetrize the two lower indices of Gamma^m_{n i}."""
    c = conn.comps
    return Connection(conn.grid, 1, 0.5 * (c + np.swapaxes(c, 1, 2)))


def gen_manufactured(grid, seed, amplitude, terms=2, kmax=2):
    """Smooth torsion-free trig-polynomial connection with recorded coefficients.

    The coefficient table is reproducible from (seed, amplitude, n) via
    ``manufactured_table``, so dGamma and Riem(Gamma) have closed forms.
    """
    table = manufactured_table(seed, amplitude, grid.n, terms, kmax)
    return _connection_from_table(table, grid)


def gen_pure_gauge(grid, seed, amplitude, det_floor=0.05):
    """Riemann-flat connection Gamma = J^{-1} d J for a gradient-built J.

    J = I + grad(G) with a smooth trig potential G scaled so the gradient
    perturbation is O(amplitude); J is the Jacobian of the map
    x -> x + G(x), so vec(J) is curl-free by construction.
    Returns (Gamma, J_truth).
    """
    n = grid.n
    kmax = 2
    table = TrigTable(
        seed, _S_GAUGE, n, amplitude / (math.pi * kmax), n, terms=2, kmax=kmax
    )
    pts = grid.points()
    Jc = np.zeros((n, n) + grid.shape)
    for mu in range(n):
        for nu in range(n):
            Jc[mu, nu] = table.eval_d(pts, nu)[mu]
        Jc[mu, mu] += 1.0
    J = MatrixForm(grid, 0, dyadic_quantize(Jc[:, :, None]))
    try:
        Jinv, _ = pointwise_inverse(J, det_floor)
    except ValueError as exc:
        raise ValueError(f"pure-gauge perturbation not invertible: {exc}") from exc
    gamma = matmul0(Jinv, ext_d(J))
    gamma = Connection(grid, 1, dyadic_quantize(gamma.comps))
    return gamma, J


class KinkMap:
    """C^{1,1} coordinate change with a Jacobian kink across x1 = c.

    old_1 = new_1 + amplitude * max(new_1 - c, 0)^2 * bump(new_perp); other
    axes pass through. The Jacobian jump across the hyperplane is rank-one
    normal, so the pulled-back connection has a bounded jump (L^inf) while
    its W^{1,p} norm blows up under refinement.
    """

    def __init__(self, grid, seed, amplitude):
        self.grid = grid
        self.amplitude = amplitude
        w0 = grid.hi[0] - grid.lo[0]
        # kink placed at an irrational fraction so no grid line resolves it
        self.c = grid.lo[0] + w0 * (0.5 + (math.sqrt(5.0) - 2.0) / 8.0)
        draws = uniform_stream(seed, _S_ROUGH_MAP, 2 * (grid.n - 1))
        self.bump_amp = 0.25 + 0.25 * draws[: grid.n - 1]
        self.bump_phase = draws[grid.n - 1 :] * (2.0 * math.pi)

    def _bump(self, perp):
        b = np.ones(perp.shape[1:])
        for j in range(perp.shape[0]):
            b = b * (1.0 + self.bump_amp[j] * np.sin(math.pi * perp[j] + self.bump_phase[j]))
        return b

    def _bump_d(self, perp, j):
        b = np.ones(perp.shape[1:])
        for i in range(perp.shape[0]):
            if i == j:
                b = b * (
                    self.bump_amp[i]
                    * math.pi
                    * np.cos(math.pi * perp[i] + self.bump_phase[i])
                )
            else:
                b = b * (1.0 + self.bump_amp[i] * np.sin(math.pi * perp[i] + self.bump_phase[i]))
        return b

    def forward(self, pts):
        out = np.array(pts, dtype=np.float64, copy=True)
        ramp = np.maximum(pts[0] - self.c, 0.0) ** 2
        out[0] = pts[0] + self.amplitude * ramp * self._bump(pts[1:])
        return out

    def jacobian(self, pts):
        n = pts.shape[0]
        K = np.zeros((n, n) + pts.shape[1:])
        for i in range(n):
            K[i, i] = 1.0
        ramp = np.maximum(pts[0] - self.c, 0.0)
        K[0, 0] += self.amplitude * 2.0 * ramp * self._bump(pts[1:])
        for j in range(1, n):
            K[0, j] = self.amplitude * ramp**2 * self._bump_d(pts[1:], j - 1)
        return K

    def min_jacobian_det(self):
        K = self.jacobian(self.grid.points())
        # triangular structure: det K = K[0,0]
        return float(np.min(K[0, 0]))


def gen_roughened(grid, seed, amplitude, terms=2, kmax=2):
    """Roughen a smooth connection by a kinked coordinate change.

    Returns (gamma_rough, gamma_smooth, cmap): gamma_smooth sampled on the
    grid, gamma_rough its pullback under the KinkMap (evaluated analytically
    at the mapped points, Jacobian-derivative term by differencing K).
    """
    table = TrigTable(
        seed, _S_ROUGH_SMOOTH, grid.n**3, amplitude, grid.n, terms, kmax
    )
    kink = KinkMap(grid, seed, amplitude)
    mdet = kink.min_jacobian_det()
    if mdet <= 0.0:
        raise ValueError(f"kink map not bi-Lipschitz: min det = {mdet:.3e}")
    n = grid.n

    def ref_eval(pts):
        vals = table.eval(pts).reshape((n, n, n) + pts.shape[1:])
        return 0.5 * (vals + np.swapaxes(vals, 1, 2))

    cmap = CoordinateMap(grid, forward=kink.forward, jacobian=kink.jacobian)
    rough = pullback_connection(ref_eval, cmap)
    rough = Connection(grid, 1, dyadic_quantize(rough.comps))
    smooth = _connection_from_table(table, grid)
    return rough, smooth, cmap


def gen_family(grid, seed, M, count, p=6.0):
    """``count`` connections normalized to share ||G||_inf + ||dG||_p = M.

    Alternates manufactured and roughened members on derived sub-seeds.
    """
    if count < 2:
        raise ValueError("family needs count >= 2")
    out = []
    subseeds = uniform_stream(seed, _S_FAMILY, count)
    for i in range(count):
        sub = int(subseeds[i] * 2**53) + i
        if i % 2 == 0:
            g = gen_manufactured(grid, sub, 1.0)
        else:
            g, _, _ = gen_roughened(grid, sub, 0.5)
        norm = lp_norm(g, np.inf) + lp_norm(ext_d(g), p)
        if M == 0.0 or norm == 0.0:
            scaled = Connection.zeros(grid)
        else:
            scaled = Connection(grid, 1, dyadic_quantize(g.comps * (M / norm)))
        out.append(scaled)
    return out


def generate(spec):
    """Dispatch on a CaseSpec; returns dict of named fields (primary first)."""
    if spec.kind == "flat":
        return {"gamma": gen_flat(spec.grid)}
    if spec.kind == "manufactured":
        return {"gamma": gen_manufactured(spec.grid, spec.seed, spec.amplitude)}
    if spec.kind == "pure-gauge":
        gamma, J = gen_pure_gauge(spec.grid, spec.seed, spec.amplitude)
        return {"gamma": gamma, "jacobian_truth": J}
    if spec.kind == "roughened":
        rough, smooth, _ = gen_roughened(spec.grid, spec.seed, spec.amplitude)
        return {"gamma": rough, "gamma_smooth": smooth}
    if spec.kind == "family":
        members = gen_family(spec.grid, spec.seed, spec.bound_M, spec.family_size)
        return {f"gamma_{i:02d}": g for i, g in enumerate(members)}
    raise ValueError(f"unknown kind {spec.kind!r}")
