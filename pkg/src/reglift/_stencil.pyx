# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled stencil kernels for 2-d and 3-d grids.

Per-point arithmetic mirrors _kernels_py exactly (same operand order and
associations) so the two backends are bit-for-bit interchangeable.
"""

import numpy as np

cimport numpy as cnp

cnp.import_array()


def diff_fwd_2d(double[:, :, ::1] a, int axis, double inv_h):
    cdef Py_ssize_t m = a.shape[0], s0 = a.shape[1], s1 = a.shape[2]
    out_np = np.empty((m, s0, s1), dtype=np.float64)
    cdef double[:, :, ::1] out = out_np
    cdef Py_ssize_t c, i, j
    if axis == 0:
        for c in range(m):
            for i in range(s0 - 1):
                for j in range(s1):
                    out[c, i, j] = (a[c, i + 1, j] - a[c, i, j]) * inv_h
            for j in range(s1):
                out[c, s0 - 1, j] = (a[c, s0 - 1, j] - a[c, s0 - 2, j]) * inv_h
    else:
        for c in range(m):
            for i in range(s0):
                for j in range(s1 - 1):
                    out[c, i, j] = (a[c, i, j + 1] - a[c, i, j]) * inv_h
                out[c, i, s1 - 1] = (a[c, i, s1 - 1] - a[c, i, s1 - 2]) * inv_h
    return out_np


def diff_bwd_2d(double[:, :, ::1] a, int axis, double inv_h):
    cdef Py_ssize_t m = a.shape[0], s0 = a.shape[1], s1 = a.shape[2]
    out_np = np.empty((m, s0, s1), dtype=np.float64)
    cdef double[:, :, ::1] out = out_np
    cdef Py_ssize_t c, i, j
    if axis == 0:
        for c in range(m):
            for j in range(s1):
                out[c, 0, j] = (a[c, 1, j] - a[c, 0, j]) * inv_h
            for i in range(1, s0):
                for j in range(s1):
                    out[c, i, j] = (a[c, i, j] - a[c, i - 1, j]) * inv_h
    else:
        for c in range(m):
            for i in range(s0):
                out[c, i, 0] = (a[c, i, 1] - a[c, i, 0]) * inv_h
                for j in range(1, s1):
                    out[c, i, j] = (a[c, i, j] - a[c, i, j - 1]) * inv_h
    return out_np


def diff_fwd_3d(double[:, :, :, ::1] a, int axis, double inv_h):
    cdef Py_ssize_t m = a.shape[0], s0 = a.shape[1], s1 = a.shape[2], s2 = a.shape[3]
    out_np = np.empty((m, s0, s1, s2), dtype=np.float64)
    cdef double[:, :, :, ::1] out = out_np
    cdef Py_ssize_t c, i, j, k
    for c in range(m):
        for i in range(s0):
            for j in range(s1):
                for k in range(s2):
                    if axis == 0:
                        if i < s0 - 1:
                            out[c, i, j, k] = (a[c, i + 1, j, k] - a[c, i, j, k]) * inv_h
                        else:
                            out[c, i, j, k] = (a[c, i, j, k] - a[c, i - 1, j, k]) * inv_h
                    elif axis == 1:
                        if j < s1 - 1:
                            out[c, i, j, k] = (a[c, i, j + 1, k] - a[c, i, j, k]) * inv_h
                        else:
                            out[c, i, j, k] = (a[c, i, j, k] - a[c, i, j - 1, k]) * inv_h
                    else:
                        if k < s2 - 1:
                            out[c, i, j, k] = (a[c, i, j, k + 1] - a[c, i, j, k]) * inv_h
                        else:
                            out[c, i, j, k] = (a[c, i, j, k] - a[c, i, j, k - 1]) * inv_h
    return out_np


def diff_bwd_3d(double[:, :, :, ::1] a, int axis, double inv_h):
    cdef Py_ssize_t m = a.shape[0], s0 = a.shape[1], s1 = a.shape[2], s2 = a.shape[3]
    out_np = np.empty((m, s0, s1, s2), dtype=np.float64)
    cdef double[:, :, :, ::1] out = out_np
    cdef Py_ssize_t c, i, j, k
    for c in range(m):
        for i in range(s0):
            for j in range(s1):
                for k in range(s2):
                    if axis == 0:
                        if i > 0:
                            out[c, i, j, k] = (a[c, i, j, k] - a[c, i - 1, j, k]) * inv_h
                        else:
                            out[c, i, j, k] = (a[c, i + 1, j, k] - a[c, i, j, k]) * inv_h
                    elif axis == 1:
                        if j > 0:
                            out[c, i, j, k] = (a[c, i, j, k] - a[c, i, j - 1, k]) * inv_h
                        else:
                            out[c, i, j, k] = (a[c, i, j + 1, k] - a[c, i, j, k]) * inv_h
                    else:
                        if k > 0:
                            out[c, i, j, k] = (a[c, i, j, k] - a[c, i, j, k - 1]) * inv_h
                        else:
                            out[c, i, j, k] = (a[c, i, j, k + 1] - a[c, i, j, k]) * inv_h
    return out_np


def neglap_2d(double[:, :, ::1] x, double w0, double w1, bint neumann):
    cdef Py_ssize_t m = x.shape[0], s0 = x.shape[1], s1 = x.shape[2]
    out_np = np.empty((m, s0, s1), dtype=np.float64)
    cdef double[:, :, ::1] out = out_np
    cdef double c0 = 2.0 * w0 + 2.0 * w1
    cdef double l0, r0, l1, r1, acc
    cdef Py_ssize_t c, i, j
    for c in range(m):
        for i in range(s0):
            for j in range(s1):
                if i > 0:
                    l0 = x[c, i - 1, j]
                elif neumann:
                    l0 = x[c, 1, j]
                else:
                    l0 = 0.0
                if i < s0 - 1:
                    r0 = x[c, i + 1, j]
                elif neumann:
                    r0 = x[c, s0 - 2, j]
                else:
                    r0 = 0.0
                if j > 0:
                    l1 = x[c, i, j - 1]
                elif neumann:
                    l1 = x[c, i, 1]
                else:
                    l1 = 0.0
                if j < s1 - 1:
                    r1 = x[c, i, j + 1]
                elif neumann:
                    r1 = x[c, i, s1 - 2]
                else:
                    r1 = 0.0
                acc = (l0 + r0) * w0 + (l1 + r1) * w1
                out[c, i, j] = c0 * x[c, i, j] - acc
    return out_np


def neglap_3d(double[:, :, :, ::1] x, double w0, double w1, double w2, bint neumann):
    cdef Py_ssize_t m = x.shape[0], s0 = x.shape[1], s1 = x.shape[2], s2 = x.shape[3]
    out_np = np.empty((m, s0, s1, s2), dtype=np.float64)
    cdef double[:, :, :, ::1] out = out_np
    cdef double c0 = 2.0 * w0 + 2.0 * w1 + 2.0 * w2
    cdef double l0, r0, l1, r1, l2, r2, acc
    cdef Py_ssize_t c, i, j, k
    for c in range(m):
        for i in range(s0):
            for j in range(s1):
                for k in range(s2):
                    if i > 0:
                        l0 = x[c, i - 1, j, k]
                    elif neumann:
                        l0 = x[c, 1, j, k]
                    else:
                        l0 = 0.0
                    if i < s0 - 1:
                        r0 = x[c, i + 1, j, k]
                    elif neumann:
                        r0 = x[c, s0 - 2, j, k]
                    else:
                        r0 = 0.0
                    if j > 0:
                        l1 = x[c, i, j - 1, k]
                    elif neumann:
                        l1 = x[c, i, 1, k]
                    else:
                        l1 = 0.0
                    if j < s1 - 1:
                        r1 = x[c, i, j + 1, k]
                    elif neumann:
                        r1 = x[c, i, s1 - 2, k]
                    else:
                        r1 = 0.0
                    if k > 0:
                        l2 = x[c, i, j, k - 1]
                    elif neumann:
                        l2 = x[c, i, j, 1]
                    else:
                        l2 = 0.0
                    if k < s2 - 1:
                        r2 = x[c, i, j, k + 1]
                    elif neumann:
                        r2 = x[c, i, j, s2 - 2]
                    else:
                        r2 = 0.0
                    acc = (l0 + r0) * w0 + (l1 + r1) * w1 + (l2 + r2) * w2
                    out[c, i, j, k] = c0 * x[c, i, j, k] - acc
    return out_np
