"""Field dumps in the RTF1 binary format, plus JSON case sidecars.

RTF1 layout (all little-endian):

    bytes 0..3   magic "RTF1"
    u32          n  (spatial dimension)
    u32          degree
    u32          kind: 0 = matrix-valued, 1 = vector-valued
    u32 * n      points per axis
    f64 * 2n     lo_j, hi_j interleaved per axis
    f64 * ...    payload, component-major (mu[, nu], I lexicographic) then
                 row-major over grid points

The byte layout is normative: write followed by read is bit-identical.
"""

import json
import struct

import numpy as np

from .forms import MatrixForm, VectorForm, increasing_indices
from .grid import Grid

MAGIC = b"RTF1"


class FormatError(ValueError):
    pass


def write_field(path, form):
    kind = 0 if isinstance(form, MatrixForm) else 1
    g = form.grid
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<III", g.n, form.degree, kind))
        fh.write(struct.pack(f"<{g.n}I", *g.shape))
        bounds = []
        for j in range(g.n):
            bounds.extend((g.lo[j], g.hi[j]))
        fh.write(struct.pack(f"<{2 * g.n}d", *bounds))
        fh.write(np.ascontiguousarray(form.comps, dtype="<f8").tobytes())


def read_field(path):
    with open(path, "rb") as fh:
        raw = fh.read()
    if raw[:4] != MAGIC:
        raise FormatError(f"{path}: bad magic {raw[:4]!r}")
    off = 4
    n, degree, kind = struct.unpack_from("<III", raw, off)
    off += 12
    if n not in (2, 3):
        raise FormatError(f"{path}: unsupported dimension {n}")
    if kind not in (0, 1):
        raise FormatError(f"{path}: unknown kind {kind}")
    shape = struct.unpack_from(f"<{n}I", raw, off)
    off += 4 * n
    bounds = struct.unpack_from(f"<{2 * n}d", raw, off)
    off += 16 * n
    lo = bounds[0::2]
    hi = bounds[1::2]
    grid = Grid(shape=shape, lo=lo, hi=hi)
    nI = len(increasing_indices(n, degree))
    lead = (n, n) if kind == 0 else (n,)
    count = int(np.prod(lead)) * nI * grid.npoints
    if len(raw) - off < count * 8:
        raise FormatError(f"{path}: truncated payload")
    payload = np.frombuffer(raw, dtype="<f8", count=count, offset=off)
    comps = payload.reshape(lead + (nI,) + grid.shape).astype(np.float64)
    cls = MatrixForm if kind == 0 else VectorForm
    return cls(grid, degree, comps)


def write_case(path, spec):
    """Write a corpus CaseSpec sidecar as JSON."""
    with open(path, "w") as fh:
        json.dump(spec.to_json(), fh, indent=2, sort_keys=True)
        fh.write("\n")


def read_case(path, casespec_cls):
    with open(path) as fh:
        data = json.load(fh)
    return casespec_cls.from_json(data)
