"""Axis-aligned box grids with uniform per-axis spacing."""

from dataclasses import dataclass, field

import numpy as np


@dataclass(frozen=True)
class Grid:
    """Structured grid on the box [lo, hi] with ``shape`` points per axis.

    Spacing is h_j = (hi_j - lo_j) / (shape_j - 1); all fields live on the
    nodes. Dimension must be 2 or 3 and every axis needs at least 3 points.
    """

    shape: tuple
    lo: tuple
    hi: tuple
    h: tuple = field(default=None, compare=False)

    def __post_init__(self):
        shape = tuple(int(s) for s in self.shape)
        lo = tuple(float(v) for v in self.lo)
        hi = tuple(float(v) for v in self.hi)
        object.__setattr__(self, "shape", shape)
        object.__setattr__(self, "lo", lo)
        object.__setattr__(self, "hi", hi)
        n = len(shape)
        if n not in (2, 3):
            raise ValueError(f"grid dimension must be 2 or 3, got {n}")
        if len(lo) != n or len(hi) != n:
            raise ValueError("lo/hi length must match shape")
        if any(s < 3 for s in shape):
            raise ValueError("every axis needs at least 3 points")
        if any(b <= a for a, b in zip(lo, hi)):
            raise ValueError("hi must exceed lo on every axis")
        h = tuple((b - a) / (s - 1) for a, b, s in zip(lo, hi, shape))
        if self.h is not None:
            stored = tuple(float(v) for v in self.h)
            if any(abs(a - b) > 4e-16 * max(1.0, abs(b)) for a, b in zip(stored, h)):
                raise ValueError("stored spacing inconsistent with (lo, hi, shape)")
        object.__setattr__(self, "h", h)

    @property
    def n(self):
        return len(self.shape)

    @property
    def npoints(self):
        return int(np.prod(self.shape))

    @property
    def volume(self):
        return float(np.prod([b - a for a, b in zip(self.lo, self.hi)]))

    @classmethod
    def unit(cls, shape):
        """Unit box [0,1]^n with the given points per axis."""
        shape = tuple(shape)
        return cls(shape=shape, lo=(0.0,) * len(shape), hi=(1.0,) * len(shape))

    def axis_coords(self, j):
        """Node coordinates along axis j (endpoints exact)."""
        x = self.lo[j] + np.arange(self.shape[j], dtype=np.float64) * self.h[j]
        x[-1] = self.hi[j]
        return x

    def points(self):
        """All node coordinates, shape (n, *shape)."""
        axes = [self.axis_coords(j) for j in range(self.n)]
        return np.stack(np.meshgrid(*axes, indexing="ij"), axis=0)

    def trapezoid_weights(self):
        """Quadrature weights per node: prod of per-axis trapezoid weights times h^n.

        Total weight equals the box volume exactly.
        """
        w = np.ones((), dtype=np.float64)
        for j in range(self.n):
            wj = np.full(self.shape[j], self.h[j])
            wj[0] *= 0.5
            wj[-1] *= 0.5
            w = np.multiply.outer(w, wj)
        return w

    def nearest_node(self, q):
        """Index of the grid node closest to point q."""
        q = np.asarray(q, dtype=np.float64)
        if q.shape != (self.n,):
            raise ValueError(f"point must have {self.n} coordinates")
        idx = []
        for j in range(self.n):
            i = int(round((q[j] - self.lo[j]) / self.h[j]))
            idx.append(min(max(i, 0), self.shape[j] - 1))
        return tuple(idx)

    def node_coords(self, idx):
        return tuple(self.axis_coords(j)[idx[j]] for j in range(self.n))

    def is_interior(self, idx):
        return all(0 < i < s - 1 for i, s in zip(idx, self.shape))
