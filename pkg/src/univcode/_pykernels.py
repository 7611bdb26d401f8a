"""Pure numpy versions of the hot loops; reference for the compiled core."""
from __future__ import annotations

import numpy as np

SKIP = -50.0  # exp(-50) ~ 2e-22: terms this far below the max are dropped
_CHUNK = 1 << 22


def logsumexp_affine(A, B, logw) -> np.ndarray:
    """out[s] = log sum_j exp(A[s] . B[j] + logw[j]).

    A is (S, k), B is (N, k), logw is (N,).  Rows with no finite term give -inf.
    """
    A = np.ascontiguousarray(A, dtype=np.float64)
    B = np.ascontiguousarray(B, dtype=np.float64)
    logw = np.ascontiguousarray(logw, dtype=np.float64)
    S, N = A.shape[0], B.shape[0]
    out = np.empty(S)
    rows = max(1, _CHUNK // max(N, 1))
    for lo in range(0, S, rows):
        v = A[lo:lo + rows] @ B.T + logw
        m = v.max(axis=1)
        ok = np.isfinite(m)
        safe = np.where(ok, m, 0.0)
        z = v - safe[:, None]
        e = np.where(z > SKIP, np.exp(np.maximum(z, SKIP)), 0.0)
        with np.errstate(divide="ignore"):
            out[lo:lo + rows] = np.where(ok, safe + np.log(e.sum(axis=1)), -np.inf)
    return out


def first_match_decode(codebook, ys, tables, offsets, strides, qp_table, qp_strides, threshold) -> np.ndarray:
    """First codeword index whose block score reaches ``threshold``; -1 for erasure.

    Score of codeword i on y: sum_x tables[offsets[x] + sum_b counts[x, b] * strides[x, b]]
    minus qp_table[sum_b c_b * qp_strides[b]], where counts are the joint
    (input, output) counts and c the output counts.
    """
    codebook = np.asarray(codebook, dtype=np.int64)
    ys = np.asarray(ys, dtype=np.int64)
    M, n = codebook.shape
    d, K = strides.shape
    out = np.full(ys.shape[0], -1, dtype=np.int64)
    rows = np.arange(M)[:, None]
    for t, y in enumerate(ys):
        qp = qp_table[int(np.bincount(y, minlength=K) @ qp_strides)]
        joint = np.zeros((M, d, K), dtype=np.int64)
        np.add.at(joint, (rows, codebook, y[None, :]), 1)
        score = np.zeros(M)
        for x in range(d):
            score = score + tables[offsets[x] + joint[:, x, :] @ strides[x]]
        score = score - qp
        hit = np.flatnonzero(score >= threshold)
        if hit.size:
            out[t] = hit[0]
    return out
