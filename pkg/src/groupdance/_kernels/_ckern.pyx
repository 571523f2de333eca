# cython: boundscheck=False, wraparound=False, cdivision=True, language_level=3
"""Compiled hot kernels: fused attention forward/backward and forward
kinematics. Semantics mirror numpy_backend exactly; the wrapper package
picks whichever imports. Parallel loops split over independent output
slices only, so results are bit-identical to the serial path.
"""

import numpy as np

cimport numpy as cnp
from cython.parallel import prange
from libc.math cimport exp, sqrt

cnp.import_array()

NAME = "compiled"


def attn_forward(double[:, :, :, ::1] q, double[:, :, :, ::1] k,
                 double[:, :, :, ::1] v, mask, double scale):
    cdef Py_ssize_t B = q.shape[0], H = q.shape[1]
    cdef Py_ssize_t Lq = q.shape[2], Lk = k.shape[2], D = q.shape[3]
    out_arr = np.empty((B, H, Lq, D))
    w_arr = np.empty((B, H, Lq, Lk))
    cdef double[:, :, :, ::1] out = out_arr
    cdef double[:, :, :, ::1] w = w_arr
    cdef double[:, ::1] mview
    cdef bint has_mask = mask is not None
    if has_mask:
        mview = np.ascontiguousarray(mask, dtype=np.float64)
    else:
        mview = np.zeros((1, 1))
    cdef Py_ssize_t bh, b, h, i, j, d
    cdef double s, mx, tot
    for bh in prange(B * H, nogil=True, schedule="static"):
        b = bh // H
        h = bh % H
        for i in range(Lq):
            mx = -1e300
            for j in range(Lk):
                s = 0.0
                for d in range(D):
                    s = s + q[b, h, i, d] * k[b, h, j, d]
                s = s * scale
                if has_mask:
                    s = s + mview[i, j]
                w[b, h, i, j] = s
                if s > mx:
                    mx = s
            tot = 0.0
            for j in range(Lk):
                s = exp(w[b, h, i, j] - mx)
                w[b, h, i, j] = s
                tot = tot + s
            for j in range(Lk):
                w[b, h, i, j] /= tot
            for d in range(D):
                s = 0.0
                for j in range(Lk):
                    s = s + w[b, h, i, j] * v[b, h, j, d]
                out[b, h, i, d] = s
    return out_arr, w_arr


def attn_backward(double[:, :, :, ::1] gout, double[:, :, :, ::1] q,
                  double[:, :, :, ::1] k, double[:, :, :, ::1] v,
                  double[:, :, :, ::1] weights, double scale):
    cdef Py_ssize_t B = q.shape[0], H = q.shape[1]
    cdef Py_ssize_t Lq = q.shape[2], Lk = k.shape[2], D = q.shape[3]
    gq_arr = np.zeros((B, H, Lq, D))
    gk_arr = np.zeros((B, H, Lk, D))
    gv_arr = np.zeros((B, H, Lk, D))
    scratch_arr = np.empty((B, H, Lk))
    cdef double[:, :, :, ::1] gq = gq_arr
    cdef double[:, :, :, ::1] gk = gk_arr
    cdef double[:, :, :, ::1] gv = gv_arr
    cdef double[:, :, ::1] gw = scratch_arr
    cdef Py_ssize_t bh, b, h, i, j, d
    cdef double s, dot, gs
    for bh in prange(B * H, nogil=True, schedule="static"):
        b = bh // H
        h = bh % H
        for i in range(Lq):
            # dV += P^T gout ; dP = gout V^T
            dot = 0.0
            for j in range(Lk):
                s = 0.0
                for d in range(D):
                    s = s + gout[b, h, i, d] * v[b, h, j, d]
                    gv[b, h, j, d] += weights[b, h, i, j] * gout[b, h, i, d]
                gw[b, h, j] = s
                dot = dot + s * weights[b, h, i, j]
            # dS = P * (dP - rowsum(dP * P)); dQ += dS k scale; dK += dS q scale
            for j in range(Lk):
                gs = weights[b, h, i, j] * (gw[b, h, j] - dot) * scale
                for d in range(D):
                    gq[b, h, i, d] += gs * k[b, h, j, d]
                    gk[b, h, j, d] += gs * q[b, h, i, d]
    return gq_arr, gk_arr, gv_arr


def fk_positions(double[:, :, :, ::1] rotmats, double[:, ::1] tau,
                 int[::1] parents, double[:, ::1] offsets):
    cdef Py_ssize_t F = rotmats.shape[0], J = rotmats.shape[1]
    pos_arr = np.empty((F, J, 3))
    cdef double[:, :, ::1] pos = pos_arr
    world_arr = np.empty((F, J, 3, 3))
    cdef double[:, :, :, ::1] world = world_arr
    cdef Py_ssize_t f, j, a, b, c
    cdef int p
    cdef double s
    for f in prange(F, nogil=True, schedule="static"):
        for a in range(3):
            pos[f, 0, a] = tau[f, a]
            for b in range(3):
                world[f, 0, a, b] = rotmats[f, 0, a, b]
        for j in range(1, J):
            p = parents[j]
            for a in range(3):
                s = 0.0
                for b in range(3):
                    s = s + world[f, p, a, b] * offsets[j, b]
                pos[f, j, a] = pos[f, p, a] + s
            for a in range(3):
                for b in range(3):
                    s = 0.0
                    for c in range(3):
                        s = s + world[f, p, a, c] * rotmats[f, j, c, b]
                    world[f, j, a, b] = s
    return pos_arr


def sixd_to_matrix_batch(r6):
    """Gram-Schmidt (..., 6) -> (..., 3, 3); mirrors the numpy backend."""
    arr = np.ascontiguousarray(r6, dtype=np.float64)
    lead = arr.shape[:-1]
    flat = arr.reshape(-1, 6)
    out_arr = np.empty((flat.shape[0], 3, 3))
    _sixd_kernel(flat, out_arr)
    return out_arr.reshape(lead + (3, 3))


cdef void _sixd_kernel(double[:, ::1] r6, double[:, :, ::1] out) noexcept:
    cdef Py_ssize_t n = r6.shape[0], i
    cdef double n1, dot, n2
    cdef double b1x, b1y, b1z, b2x, b2y, b2z
    for i in prange(n, nogil=True, schedule="static"):
        n1 = sqrt(r6[i, 0] * r6[i, 0] + r6[i, 1] * r6[i, 1] + r6[i, 2] * r6[i, 2])
        b1x = r6[i, 0] / n1
        b1y = r6[i, 1] / n1
        b1z = r6[i, 2] / n1
        dot = b1x * r6[i, 3] + b1y * r6[i, 4] + b1z * r6[i, 5]
        b2x = r6[i, 3] - dot * b1x
        b2y = r6[i, 4] - dot * b1y
        b2z = r6[i, 5] - dot * b1z
        n2 = sqrt(b2x * b2x + b2y * b2y + b2z * b2z)
        b2x = b2x / n2
        b2y = b2y / n2
        b2z = b2z / n2
        out[i, 0, 0] = b1x
        out[i, 1, 0] = b1y
        out[i, 2, 0] = b1z
        out[i, 0, 1] = b2x
        out[i, 1, 1] = b2y
        out[i, 2, 1] = b2z
        out[i, 0, 2] = b1y * b2z - b1z * b2y
        out[i, 1, 2] = b1z * b2x - b1x * b2z
        out[i, 2, 2] = b1x * b2y - b1y * b2x
    return
