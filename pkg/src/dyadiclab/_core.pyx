# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled kernels; ``_fallback.py`` holds the reference numpy versions."""
import numpy as np
cimport numpy as cnp
from libc.math cimport sqrt, fabs, pow

cnp.import_array()


cdef double _sym_max_eig(double* G, int d) nogil:
    """Largest eigenvalue of a symmetric d x d matrix (cyclic Jacobi, in place)."""
    cdef int sweep, p, q, k
    cdef double off, theta, t, c, s, gpp, gqq, gpq, gkp, gkq, best
    if d == 1:
        return G[0]
    if d == 2:
        gpp = G[0]
        gqq = G[3]
        gpq = G[1]
        return 0.5 * (gpp + gqq) + sqrt(0.25 * (gpp - gqq) * (gpp - gqq) + gpq * gpq)
    for sweep in range(50):
        off = 0.0
        for p in range(d):
            for q in range(p + 1, d):
                off += G[p * d + q] * G[p * d + q]
        if off < 1e-30:
            break
        for p in range(d):
            for q in range(p + 1, d):
                gpq = G[p * d + q]
                if fabs(gpq) < 1e-300:
                    continue
                gpp = G[p * d + p]
                gqq = G[q * d + q]
                theta = (gqq - gpp) / (2.0 * gpq)
                t = (1.0 if theta >= 0 else -1.0) / (fabs(theta) + sqrt(theta * theta + 1.0))
                c = 1.0 / sqrt(t * t + 1.0)
                s = t * c
                for k in range(d):
                    gkp = G[k * d + p]
                    gkq = G[k * d + q]
                    G[k * d + p] = c * gkp - s * gkq
                    G[k * d + q] = s * gkp + c * gkq
                for k in range(d):
                    gkp = G[p * d + k]
                    gkq = G[q * d + k]
                    G[p * d + k] = c * gkp - s * gkq
                    G[q * d + k] = s * gkp + c * gkq
    best = G[0]
    for k in range(1, d):
        if G[k * d + k] > best:
            best = G[k * d + k]
    return best


def pair_opnorms(A, B):
    """N[x, y] = ||A[x] @ B[y]||_2 for stacks of d x d matrices."""
    cdef const double[:, :, ::1] a = np.ascontiguousarray(A, dtype=np.float64)
    cdef const double[:, :, ::1] b = np.ascontiguousarray(B, dtype=np.float64)
    cdef Py_ssize_t nx = a.shape[0], ny = b.shape[0]
    cdef int d = a.shape[1]
    if d > 8:
        raise ValueError("compiled kernel supports d <= 8")
    out = np.empty((nx, ny))
    cdef double[:, ::1] o = out
    cdef double P[64]
    cdef double G[64]
    cdef Py_ssize_t x, y
    cdef int i, j, k
    cdef double acc
    with nogil:
        for x in range(nx):
            for y in range(ny):
                for i in range(d):
                    for j in range(d):
                        acc = 0.0
                        for k in range(d):
                            acc = acc + a[x, i, k] * b[y, k, j]
                        P[i * d + j] = acc
                for i in range(d):
                    for j in range(d):
                        acc = 0.0
                        for k in range(d):
                            acc = acc + P[k * d + i] * P[k * d + j]
                        G[i * d + j] = acc
                acc = _sym_max_eig(G, d)
                o[x, y] = sqrt(acc if acc > 0 else 0.0)
    return out


def fujii_wilson(w, mu, int n, int L):
    """Per-level arrays of (1/w(Q)) sum_{x in Q} M_Q(w 1_Q)(x) mu(x)."""
    cdef Py_ssize_t r, x, key, lv, sub, span, start, cnt, c
    cdef double run, acc
    w = np.asarray(w, dtype=np.float64)
    squeeze = w.ndim == 1
    if squeeze:
        w = w[None, :]
    cdef const double[:, ::1] W = np.ascontiguousarray(w)
    cdef const double[::1] M = np.ascontiguousarray(mu, dtype=np.float64)
    cdef Py_ssize_t nd = W.shape[0], nl = W.shape[1]
    cdef Py_ssize_t nch = 1 << n
    # node sums stored level-major: offset[lv] + key
    offsets = np.zeros(L + 2, dtype=np.int64)
    for lv in range(L + 1):
        offsets[lv + 1] = offsets[lv] + (1 << (n * lv))
    cdef long long[::1] off = offsets
    cdef Py_ssize_t total = offsets[L + 1]
    sums_arr = np.zeros((nd, total))
    msum_arr = np.zeros(total)
    cdef double[:, ::1] S = sums_arr
    cdef double[::1] MS = msum_arr
    with nogil:
        for x in range(nl):
            MS[off[L] + x] = M[x]
            for r in range(nd):
                S[r, off[L] + x] = W[r, x] * M[x]
        for lv in range(L - 1, -1, -1):
            cnt = 1 << (n * lv)
            for key in range(cnt):
                for c in range(nch):
                    MS[off[lv] + key] += MS[off[lv + 1] + key * nch + c]
                    for r in range(nd):
                        S[r, off[lv] + key] += S[r, off[lv + 1] + key * nch + c]
    outs = [np.zeros((nd, 1 << (n * level))) for level in range(L + 1)]
    cdef double[:, ::1] O
    for lv in range(L + 1):
        O = outs[lv]
        span = 1 << (n * (L - lv))
        with nogil:
            for r in range(nd):
                for key in range(1 << (n * lv)):
                    acc = 0.0
                    start = key * span
                    for x in range(start, start + span):
                        run = 0.0
                        for sub in range(lv, L + 1):
                            c = x >> (n * (L - sub))
                            if S[r, off[sub] + c] / MS[off[sub] + c] > run:
                                run = S[r, off[sub] + c] / MS[off[sub] + c]
                        acc += run * M[x]
                    O[r, key] = acc / S[r, off[lv] + key]
    if squeeze:
        return [o[0] for o in outs]
    return outs


def expanding_sum_rhs(a, int m, double gamma):
    """(m+1) sum over m-tuples of a_{i1}...a_{im} (sum_{j <= min i} a_j)^gamma."""
    cdef const double[::1] A = np.ascontiguousarray(a, dtype=np.float64)
    cdef int n = A.shape[0]
    cdef double[::1] pre = np.cumsum(np.asarray(A))
    if m == 0:
        return float(pre[n - 1] ** gamma) if n else 0.0
    cdef int idx[64]
    cdef int i, pos, mn
    cdef double prod, total = 0.0
    if m > 64:
        raise ValueError("m too large")
    if n == 0:
        return 0.0
    for i in range(m):
        idx[i] = 0
    with nogil:
        while True:
            prod = 1.0
            mn = n
            for i in range(m):
                prod = prod * A[idx[i]]
                if idx[i] < mn:
                    mn = idx[i]
            total = total + prod * pow(pre[mn], gamma)
            pos = m - 1
            while pos >= 0:
                idx[pos] += 1
                if idx[pos] < n:
                    break
                idx[pos] = 0
                pos -= 1
            if pos < 0:
                break
    return (m + 1) * total
