# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled NURBS kernels.

Every output element is produced by exactly one thread and accumulated in a
fixed order, so results are bit-identical for any ``num_threads``.
"""

import numpy as np
cimport numpy as cnp
from cython.parallel cimport prange
from libc.math cimport sqrt

cnp.import_array()

BACKEND = "cython"

ctypedef cnp.int64_t i64


cdef inline void _eval_sample(
    const double[:, :, ::1] P, const double[:, ::1] W,
    const double[::1] nu, const double[::1] nv,
    Py_ssize_t iu, Py_ssize_t jv, Py_ssize_t p, Py_ssize_t q, Py_ssize_t dim,
    double[::1] out_s, double* out_w,
) noexcept nogil:
    cdef double acc[4]
    cdef double c, den = 0.0
    cdef Py_ssize_t r, h, k, i, j
    for k in range(dim):
        acc[k] = 0.0
    for r in range(p + 1):
        i = iu + r
        for h in range(q + 1):
            j = jv + h
            c = nu[r] * nv[h] * W[i, j]
            den = den + c
            for k in range(dim):
                acc[k] = acc[k] + c * P[i, j, k]
    out_w[0] = den
    for k in range(dim):
        out_s[k] = acc[k] / den


def forward(const double[:, :, ::1] points, const double[:, ::1] weights,
            const i64[::1] span_u, const double[:, ::1] basis_u,
            const i64[::1] span_v, const double[:, ::1] basis_v,
            int num_threads=1):
    cdef Py_ssize_t A = span_u.shape[0], B = span_v.shape[0]
    cdef Py_ssize_t dim = points.shape[2]
    cdef Py_ssize_t p = basis_u.shape[1] - 1, q = basis_v.shape[1] - 1
    if dim > 4:
        raise ValueError("dimension must be at most 4")
    S_arr = np.empty((B, A, dim))
    D_arr = np.empty((B, A))
    cdef double[:, :, ::1] S = S_arr
    cdef double[:, ::1] D = D_arr
    cdef Py_ssize_t s, a, b
    for s in prange(A * B, nogil=True, schedule="static", num_threads=num_threads):
        b = s // A
        a = s - b * A
        _eval_sample(points, weights, basis_u[a], basis_v[b],
                     span_u[a] - p, span_v[b] - q, p, q, dim, S[b, a], &D[b, a])
    return S_arr, D_arr


cdef inline void _gather(
    const double[:, :, ::1] P, const double[:, ::1] W,
    const i64[::1] span_u, const double[:, ::1] Nu,
    const i64[::1] span_v, const double[:, ::1] Nv,
    const double[:, :, ::1] S, const double[:, ::1] D, const double[:, :, ::1] G,
    Py_ssize_t i, Py_ssize_t j, Py_ssize_t a0, Py_ssize_t a1, Py_ssize_t b0, Py_ssize_t b1,
    Py_ssize_t p, Py_ssize_t q, Py_ssize_t dim,
    double[::1] out_p, double* out_w,
) noexcept nogil:
    cdef double acc[4]
    cdef double accw = 0.0, t, dot, nvb, wij = W[i, j]
    cdef Py_ssize_t a, b, k, h
    for k in range(dim):
        acc[k] = 0.0
    # samples visited in row-major (v-major) order, same as the tape
    for b in range(b0, b1):
        h = j - (span_v[b] - q)
        nvb = Nv[b, h]
        for a in range(a0, a1):
            t = Nu[a, i - (span_u[a] - p)] * nvb
            dot = 0.0
            for k in range(dim):
                acc[k] = acc[k] + (t * wij / D[b, a]) * G[b, a, k]
                dot = dot + G[b, a, k] * ((t / D[b, a]) * (P[i, j, k] - S[b, a, k]))
            accw = accw + dot
    for k in range(dim):
        out_p[k] = acc[k]
    out_w[0] = accw


cdef void _ranges(const i64[::1] spans, Py_ssize_t deg, Py_ssize_t n, i64[::1] lo, i64[::1] hi) noexcept nogil:
    # spans are non-decreasing, so the samples touching control point i form
    # one contiguous block [lo[i], hi[i])
    cdef Py_ssize_t a, r, i
    for i in range(n):
        lo[i] = 0
        hi[i] = 0
    for a in range(spans.shape[0]):
        for r in range(deg + 1):
            i = spans[a] - deg + r
            if hi[i] == 0:
                lo[i] = a
            hi[i] = a + 1


def backward(const double[:, :, ::1] points, const double[:, ::1] weights,
             const i64[::1] span_u, const double[:, ::1] basis_u,
             const i64[::1] span_v, const double[:, ::1] basis_v,
             const double[:, :, ::1] S, const double[:, ::1] denom,
             const double[:, :, ::1] upstream, int num_threads=1):
    cdef Py_ssize_t n = points.shape[0], m = points.shape[1], dim = points.shape[2]
    cdef Py_ssize_t p = basis_u.shape[1] - 1, q = basis_v.shape[1] - 1
    if dim > 4:
        raise ValueError("dimension must be at most 4")
    dP_arr = np.zeros((n, m, dim))
    dW_arr = np.zeros((n, m))
    cdef double[:, :, ::1] dP = dP_arr
    cdef double[:, ::1] dW = dW_arr
    ulo_a = np.zeros(n, dtype=np.int64)
    uhi_a = np.zeros(n, dtype=np.int64)
    vlo_a = np.zeros(m, dtype=np.int64)
    vhi_a = np.zeros(m, dtype=np.int64)
    cdef i64[::1] ulo = ulo_a, uhi = uhi_a, vlo = vlo_a, vhi = vhi_a
    _ranges(span_u, p, n, ulo, uhi)
    _ranges(span_v, q, m, vlo, vhi)
    cdef Py_ssize_t c, i, j
    for c in prange(n * m, nogil=True, schedule="static", num_threads=num_threads):
        i = c // m
        j = c - i * m
        _gather(points, weights, span_u, basis_u, span_v, basis_v, S, denom, upstream,
                i, j, ulo[i], uhi[i], vlo[j], vhi[j], p, q, dim, dP[i, j], &dW[i, j])
    return dP_arr, dW_arr


def nearest(const double[:, ::1] query, const double[:, ::1] ref, int num_threads=1):
    """Exact nearest neighbour by a sweep over ``ref`` sorted on the first coordinate.

    A candidate whose first-coordinate gap alone exceeds the best squared
    distance cannot win or tie, so the scan stops there. Results equal a
    brute-force scan, with ties resolved to the lowest reference index.
    """
    cdef Py_ssize_t nq = query.shape[0], nr = ref.shape[0], dim = query.shape[1]
    order_arr = np.argsort(np.asarray(ref[:, 0]), kind="stable").astype(np.int64)
    sorted_arr = np.ascontiguousarray(np.asarray(ref)[order_arr])
    xs_arr = np.ascontiguousarray(sorted_arr[:, 0])
    cdef const i64[::1] order = order_arr
    cdef const double[:, ::1] sref = sorted_arr
    cdef const double[::1] xs = xs_arr
    idx_arr = np.empty(nq, dtype=np.int64)
    dist_arr = np.empty(nq)
    cdef i64[::1] idx = idx_arr
    cdef double[::1] dist = dist_arr
    cdef Py_ssize_t s, k, lo, hi, mid, r, best
    cdef double qx, dx, d2, bd, diff
    for s in prange(nq, nogil=True, schedule="static", num_threads=num_threads):
        qx = query[s, 0]
        lo = 0
        hi = nr
        while lo < hi:
            mid = (lo + hi) // 2
            if xs[mid] < qx:
                lo = mid + 1
            else:
                hi = mid
        best = nr
        bd = 1.0e308 * 10.0
        r = lo
        while r < nr:
            dx = xs[r] - qx
            if dx * dx > bd:
                break
            d2 = 0.0
            for k in range(dim):
                diff = query[s, k] - sref[r, k]
                d2 = d2 + diff * diff
            if d2 < bd or (d2 == bd and order[r] < best):
                bd = d2
                best = order[r]
            r = r + 1
        r = lo - 1
        while r >= 0:
            dx = xs[r] - qx
            if dx * dx > bd:
                break
            d2 = 0.0
            for k in range(dim):
                diff = query[s, k] - sref[r, k]
                d2 = d2 + diff * diff
            if d2 < bd or (d2 == bd and order[r] < best):
                bd = d2
                best = order[r]
            r = r - 1
        idx[s] = best
        dist[s] = sqrt(bd)
    return idx_arr, dist_arr
