# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled mesh kernels (same contract as ``_kernels_py``)."""

import numpy as np
cimport numpy as cnp
from libc.math cimport sqrt

cnp.import_array()

BACKEND = "cython"

cdef int NXT[3]
cdef int PRV[3]
NXT[:] = [1, 2, 0]
PRV[:] = [2, 0, 1]


cdef inline double _dot(const double[:, ::1] x, Py_ssize_t i, Py_ssize_t j,
                        Py_ssize_t k, Py_ssize_t l, Py_ssize_t m) nogil:
    # (x_i - x_j) . (x_k - x_l)
    cdef double acc = 0.0
    cdef Py_ssize_t t
    for t in range(m):
        acc += (x[i, t] - x[j, t]) * (x[k, t] - x[l, t])
    return acc


def corner_cotangents(x, faces):
    cdef const double[:, ::1] X = np.ascontiguousarray(x, dtype=np.float64)
    cdef const cnp.int64_t[:, ::1] F = np.ascontiguousarray(faces, dtype=np.int64)
    cdef Py_ssize_t nf = F.shape[0], m = X.shape[1], f, c
    cot_arr = np.empty((nf, 3))
    dbl_arr = np.empty(nf)
    cdef double[:, ::1] cot = cot_arr
    cdef double[::1] dbl = dbl_arr
    cdef double d, uu, vv, s, acc
    cdef double dd[3]
    cdef Py_ssize_t ic, ia, ib
    with nogil:
        for f in range(nf):
            acc = 0.0
            for c in range(3):
                ic = F[f, c]; ia = F[f, NXT[c]]; ib = F[f, PRV[c]]
                d = _dot(X, ia, ic, ib, ic, m)
                uu = _dot(X, ia, ic, ia, ic, m)
                vv = _dot(X, ib, ic, ib, ic, m)
                s = uu * vv - d * d
                acc += sqrt(s if s > 0 else 0.0)
                dd[c] = d
            s = acc / 3.0
            dbl[f] = s
            for c in range(3):
                cot[f, c] = dd[c] / s
    return cot_arr, dbl_arr


def mixed_vertex_areas(x, faces, cot, dblarea, Py_ssize_t n_vertices):
    cdef const double[:, ::1] X = np.ascontiguousarray(x, dtype=np.float64)
    cdef const cnp.int64_t[:, ::1] F = np.ascontiguousarray(faces, dtype=np.int64)
    cdef const double[:, ::1] C = np.ascontiguousarray(cot, dtype=np.float64)
    cdef const double[::1] D = np.ascontiguousarray(dblarea, dtype=np.float64)
    cdef Py_ssize_t nf = F.shape[0], m = X.shape[1], f, c, ia, ib
    A_arr = np.zeros(n_vertices)
    touched_arr = np.zeros(n_vertices, dtype=np.uint8)
    cdef double[::1] A = A_arr
    cdef unsigned char[::1] touched = touched_arr
    cdef double w, area
    cdef bint obtuse
    with nogil:
        for f in range(nf):
            obtuse = C[f, 0] < 0 or C[f, 1] < 0 or C[f, 2] < 0
            if obtuse:
                area = 0.5 * D[f]
                for c in range(3):
                    A[F[f, c]] += area * (0.5 if C[f, c] < 0 else 0.25)
                    touched[F[f, c]] = 1
            else:
                for c in range(3):
                    ia = F[f, NXT[c]]; ib = F[f, PRV[c]]
                    w = _dot(X, ia, ib, ia, ib, m) * C[f, c] / 8.0
                    A[ia] += w
                    A[ib] += w
    return A_arr, int(touched_arr.sum())


def cotan_laplacian_apply(x, faces, cot):
    cdef const double[:, ::1] X = np.ascontiguousarray(x, dtype=np.float64)
    cdef const cnp.int64_t[:, ::1] F = np.ascontiguousarray(faces, dtype=np.int64)
    cdef const double[:, ::1] C = np.ascontiguousarray(cot, dtype=np.float64)
    cdef Py_ssize_t nf = F.shape[0], m = X.shape[1], f, c, t, ia, ib
    Y_arr = np.zeros((X.shape[0], m))
    cdef double[:, ::1] Y = Y_arr
    cdef double w, diff
    with nogil:
        for f in range(nf):
            for c in range(3):
                ia = F[f, NXT[c]]; ib = F[f, PRV[c]]
                w = 0.5 * C[f, c]
                for t in range(m):
                    diff = w * (X[ib, t] - X[ia, t])
                    Y[ia, t] += diff
                    Y[ib, t] -= diff
    return Y_arr


def willmore_energy_grad(x, faces):
    cdef const double[:, ::1] X = np.ascontiguousarray(x, dtype=np.float64)
    cdef const cnp.int64_t[:, ::1] F = np.ascontiguousarray(faces, dtype=np.int64)
    cdef Py_ssize_t n = X.shape[0], m = X.shape[1], nf = F.shape[0]
    cot_arr, dbl_arr = corner_cotangents(x, faces)
    A_arr, _ = mixed_vertex_areas(x, faces, cot_arr, dbl_arr, n)
    Y_arr = cotan_laplacian_apply(x, faces, cot_arr)
    cdef const double[:, ::1] C = cot_arr
    cdef const double[::1] D = dbl_arr
    cdef const double[::1] A = A_arr
    H_arr = Y_arr / (2.0 * A_arr[:, None])
    cdef double[:, ::1] H = H_arr
    Abar_arr = -np.einsum("ij,ij->i", H_arr, H_arr)
    cdef double[::1] Abar = Abar_arr
    cdef double W = float(-np.sum(Abar_arr * A_arr))
    G_arr = np.zeros((n, m))
    cdef double[:, ::1] G = G_arr

    cdef Py_ssize_t f, c, t, ic, ia, ib
    cdef bint obtuse
    cdef double cotc, asum, e2, sc, d, uu, vv, s, s3, gb, ge, u_t, v_t, dcu, dcv
    cdef double abar, frac, coef
    with nogil:
        for f in range(nf):
            obtuse = C[f, 0] < 0 or C[f, 1] < 0 or C[f, 2] < 0
            s = D[f]
            s3 = s * s * s
            for c in range(3):
                ic = F[f, c]; ia = F[f, NXT[c]]; ib = F[f, PRV[c]]
                cotc = C[f, c]
                asum = 0.0 if obtuse else Abar[ia] + Abar[ib]
                e2 = _dot(X, ia, ib, ia, ib, m)
                d = _dot(X, ia, ic, ib, ic, m)
                uu = _dot(X, ia, ic, ia, ic, m)
                vv = _dot(X, ib, ic, ib, ic, m)
                sc = asum * e2 / 8.0
                for t in range(m):
                    sc += 0.5 * (X[ib, t] - X[ia, t]) * (H[ia, t] - H[ib, t])
                for t in range(m):
                    gb = 0.5 * cotc * (H[ia, t] - H[ib, t])
                    ge = asum * cotc / 4.0 * (X[ia, t] - X[ib, t])
                    G[ib, t] += gb - ge
                    G[ia, t] += ge - gb
                    u_t = X[ia, t] - X[ic, t]
                    v_t = X[ib, t] - X[ic, t]
                    dcu = v_t / s - d / s3 * (vv * u_t - d * v_t)
                    dcv = u_t / s - d / s3 * (uu * v_t - d * u_t)
                    G[ia, t] += sc * dcu
                    G[ib, t] += sc * dcv
                    G[ic, t] -= sc * (dcu + dcv)
            if obtuse:
                abar = 0.0
                for c in range(3):
                    frac = 0.5 if C[f, c] < 0 else 0.25
                    abar += frac * Abar[F[f, c]]
                ic = F[f, 0]; ia = F[f, 1]; ib = F[f, 2]
                d = _dot(X, ia, ic, ib, ic, m)
                uu = _dot(X, ia, ic, ia, ic, m)
                vv = _dot(X, ib, ic, ib, ic, m)
                coef = abar / (2.0 * s)
                for t in range(m):
                    u_t = X[ia, t] - X[ic, t]
                    v_t = X[ib, t] - X[ic, t]
                    dcu = coef * (vv * u_t - d * v_t)
                    dcv = coef * (uu * v_t - d * u_t)
                    G[ia, t] += dcu
                    G[ib, t] += dcv
                    G[ic, t] -= dcu + dcv
    return W, G_arr
