# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled versions of the hot loops in ``_pykernels``."""
import numpy as np
cimport numpy as cnp
from libc.math cimport exp, log, INFINITY

cnp.import_array()

cdef double SKIP = -50.0


def logsumexp_affine(A, B, logw):
    cdef double[:, ::1] a = np.ascontiguousarray(A, dtype=np.float64)
    cdef double[:, ::1] b = np.ascontiguousarray(B, dtype=np.float64)
    cdef double[::1] lw = np.ascontiguousarray(logw, dtype=np.float64)
    cdef Py_ssize_t S = a.shape[0], N = b.shape[0], k = a.shape[1]
    cdef Py_ssize_t s, j, t
    cdef double v, m, acc
    out = np.empty(S)
    cdef double[::1] o = out
    cdef double[::1] buf = np.empty(N)
    with nogil:
        for s in range(S):
            m = -INFINITY
            for j in range(N):
                v = lw[j]
                for t in range(k):
                    v += a[s, t] * b[j, t]
                buf[j] = v
                if v > m:
                    m = v
            if m == -INFINITY or m != m:
                o[s] = m
                continue
            acc = 0.0
            for j in range(N):
                v = buf[j] - m
                if v > SKIP:
                    acc += exp(v)
            o[s] = m + log(acc)
    return out


def first_match_decode(codebook, ys, tables, offsets, strides, qp_table, qp_strides, double threshold):
    cdef cnp.int64_t[:, ::1] cb = np.ascontiguousarray(codebook, dtype=np.int64)
    cdef cnp.int64_t[:, ::1] yv = np.ascontiguousarray(ys, dtype=np.int64)
    cdef double[::1] tab = np.ascontiguousarray(tables, dtype=np.float64)
    cdef cnp.int64_t[::1] off = np.ascontiguousarray(offsets, dtype=np.int64)
    cdef cnp.int64_t[:, ::1] st = np.ascontiguousarray(strides, dtype=np.int64)
    cdef double[::1] qpt = np.ascontiguousarray(qp_table, dtype=np.float64)
    cdef cnp.int64_t[::1] qst = np.ascontiguousarray(qp_strides, dtype=np.int64)
    cdef Py_ssize_t M = cb.shape[0], n = cb.shape[1], T = yv.shape[0]
    cdef Py_ssize_t d = st.shape[0], K = st.shape[1]
    cdef Py_ssize_t t, i, p, x, c
    cdef cnp.int64_t idx
    cdef double qp, score
    out = np.full(T, -1, dtype=np.int64)
    cdef cnp.int64_t[::1] o = out
    joint_arr = np.zeros((d, K), dtype=np.int64)
    cdef cnp.int64_t[:, ::1] joint = joint_arr
    with nogil:
        for t in range(T):
            idx = 0
            for p in range(n):
                idx += qst[yv[t, p]]
            qp = qpt[idx]
            for i in range(M):
                for x in range(d):
                    for c in range(K):
                        joint[x, c] = 0
                for p in range(n):
                    joint[cb[i, p], yv[t, p]] += 1
                score = 0.0
                for x in range(d):
                    idx = off[x]
                    for c in range(K):
                        idx += joint[x, c] * st[x, c]
                    score = score + tab[idx]
                score = score - qp
                if score >= threshold:
                    o[t] = i
                    break
    return out
