"""Pure numpy kernels; the fallback when the compiled extension is missing.

Signatures match ``dnurbs.core._kernels`` exactly. ``num_threads`` is accepted
and ignored. ``np.einsum`` is used without path optimisation so no BLAS call
can reorder the sums; results are therefore independent of BLAS threading.
"""

import numpy as np

from .basis import dense_basis_matrix

BACKEND = "python"

_CHUNK = 1 << 22  # pair distances per block in nearest()


def forward(points, weights, span_u, basis_u, span_v, basis_v, num_threads=1):
    n, m, _ = points.shape
    Bu = dense_basis_matrix(span_u, basis_u, n)
    Bv = dense_basis_matrix(span_v, basis_v, m)
    Pw = np.concatenate([points * weights[:, :, None], weights[:, :, None]], axis=2)
    T = np.einsum("ai,ijk->ajk", Bu, Pw)
    H = np.einsum("bj,ajk->bak", Bv, T)
    denom = np.ascontiguousarray(H[:, :, -1])
    S = H[:, :, :-1] / denom[:, :, None]
    return np.ascontiguousarray(S), denom


def backward(points, weights, span_u, basis_u, span_v, basis_v, S, denom, upstream, num_threads=1):
    n, m, _ = points.shape
    Bu = dense_basis_matrix(span_u, basis_u, n)
    Bv = dense_basis_matrix(span_v, basis_v, m)
    Gw = upstream / denom[:, :, None]
    X = np.einsum("bj,bik->ijk", Bv, np.einsum("ai,bak->bik", Bu, Gw))
    gs = np.einsum("bak,bak->ba", Gw, S)
    Y = np.einsum("bj,bi->ij", Bv, np.einsum("ai,ba->bi", Bu, gs))
    d_points = weights[:, :, None] * X
    d_weights = np.einsum("ijk,ijk->ij", points, X) - Y
    return d_points, d_weights


def nearest(query, ref, num_threads=1):
    """Index of, and distance to, the nearest ``ref`` point for each query.

    Ties resolve to the lowest reference index.
    """
    nq = query.shape[0]
    idx = np.empty(nq, dtype=np.int64)
    dist = np.empty(nq)
    step = max(1, _CHUNK // max(1, ref.shape[0]))
    for lo in range(0, nq, step):
        q = query[lo : lo + step]
        # coordinate-by-coordinate accumulation, the same rounding as the compiled kernel
        d2 = np.zeros((q.shape[0], ref.shape[0]))
        for k in range(ref.shape[1]):
            diff = q[:, None, k] - ref[None, :, k]
            d2 += diff * diff
        k = np.argmin(d2, axis=1)
        idx[lo : lo + step] = k
        dist[lo : lo + step] = np.sqrt(d2[np.arange(q.shape[0]), k])
    return idx, dist
