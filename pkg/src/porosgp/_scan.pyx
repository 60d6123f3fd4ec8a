# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled candidate scan.

Tiles the candidate axis, forms each score tile W F_tile^T with BLAS and
fuses the running-minimum pass over the tile, so the full score matrix is
never materialized. Tiles are visited in ascending candidate order and the
comparison is strict, so ties resolve to the lowest candidate index exactly
like a serial scan.
"""

import numpy as np

cimport numpy as cnp
from cython.parallel import prange
from libc.math cimport INFINITY
from scipy.linalg.cython_blas cimport dgemm

cnp.import_array()

# score workspace kept across calls so its pages stay mapped; the scan is
# called once per optimizer iteration from a single thread (the threads
# argument parallelizes within one call)
_workspace = None


def scan_scores(double[:, ::1] weights, double[:, ::1] feats, int threads=1,
                Py_ssize_t tile=8192):
    """First index (and value) of the minimal score w . f per weight row.

    tile bounds the score block held at once; the default keeps it inside
    the cache for typical element counts.
    """
    global _workspace
    cdef Py_ssize_t ne = weights.shape[0]
    cdef Py_ssize_t nc = feats.shape[0]
    cdef Py_ssize_t nf = weights.shape[1]
    if feats.shape[1] != nf:
        raise ValueError("weights and features disagree on feature count")
    if threads < 1:
        threads = 1
    if tile < 64:
        tile = 64
    if nc < tile:
        tile = nc
    best_arr = np.zeros(ne, dtype=np.int64)
    val_arr = np.full(ne, np.inf)
    if ne == 0 or nc == 0:
        return best_arr, val_arr
    cdef cnp.int64_t[::1] best = best_arr
    cdef double[::1] bestval = val_arr
    if _workspace is None or _workspace.size < ne * tile:
        _workspace = np.empty(ne * tile, dtype=np.float64)
    buf_arr = _workspace
    cdef double[::1] buf = buf_arr
    cdef char ta = b'T', tn = b'N'
    cdef int m, n = <int> ne, k = <int> nf, ld = <int> nf
    cdef double one = 1.0, zero = 0.0
    cdef double *wp = &weights[0, 0]
    cdef double *cp = &buf[0]
    cdef double *ap
    cdef double *col
    cdef Py_ssize_t start, t, e, i, nvec
    cdef double low, l0, l1, l2, l3
    with nogil:
        start = 0
        while start < nc:
            t = nc - start
            if t > tile:
                t = tile
            m = <int> t
            ap = &feats[start, 0]
            # column j of the Fortran result block is the contiguous score
            # row of element j against this tile
            dgemm(&ta, &tn, &m, &n, &k, &one, ap, &ld, wp, &ld, &zero,
                  cp, &m)
            nvec = t - (t & 3)
            for e in prange(ne, num_threads=threads, schedule="static"):
                # min first over four independent lanes (no loop-carried
                # latency chain), index only when the tile improves on the
                # running best; strict comparisons keep the lowest
                # candidate index on ties either way
                col = cp + e * t
                l0 = INFINITY
                l1 = INFINITY
                l2 = INFINITY
                l3 = INFINITY
                for i in range(0, nvec, 4):
                    l0 = min(l0, col[i])
                    l1 = min(l1, col[i + 1])
                    l2 = min(l2, col[i + 2])
                    l3 = min(l3, col[i + 3])
                low = min(min(l0, l1), min(l2, l3))
                for i in range(nvec, t):
                    low = min(low, col[i])
                if low < bestval[e]:
                    bestval[e] = low
                    for i in range(t):
                        if col[i] == low:
                            best[e] = start + i
                            break
            start += tile
    return best_arr, val_arr
