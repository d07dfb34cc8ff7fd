"""Pure-Python/numpy versions of the compiled kernels in ``_core.pyx``.

Both implementations follow the same arithmetic so results agree to
rounding; ``tests/test_kernels.py`` checks them against each other.
"""
from __future__ import annotations

import numpy as np


def pair_opnorms(A, B):
    """N[x, y] = ||A[x] @ B[y]||_2 for stacks of d x d matrices."""
    A = np.asarray(A, dtype=float)
    B = np.asarray(B, dtype=float)
    prod = np.einsum("xij,yjk->xyik", A, B)
    return np.linalg.norm(prod, ord=2, axis=(-2, -1))


def fujii_wilson(w, mu, n, L):
    """Fujii-Wilson quantity (1/w(Q)) sum_{x in Q} M_Q(w 1_Q)(x) mu(x) for
    every cube, per level (Morton order).  ``w`` may be (nleaves,) or
    (ndir, nleaves); the result has matching leading shape."""
    w = np.asarray(w, dtype=float)
    squeeze = w.ndim == 1
    if squeeze:
        w = w[None, :]
    mu = np.asarray(mu, dtype=float)
    nd, nl = w.shape
    nch = 2 ** n
    sums = [None] * (L + 1)
    msum = [None] * (L + 1)
    sums[L] = w * mu
    msum[L] = mu
    for lv in range(L - 1, -1, -1):
        sums[lv] = sums[lv + 1].reshape(nd, -1, nch).sum(axis=2)
        msum[lv] = msum[lv + 1].reshape(-1, nch).sum(axis=1)
    avg = [sums[lv] / msum[lv] for lv in range(L + 1)]
    out = []
    for lv in range(L + 1):
        # running max of averages from level lv down to each leaf
        run = np.repeat(avg[lv], 2 ** (n * (L - lv)), axis=1)
        for sub in range(lv + 1, L + 1):
            run = np.maximum(run, np.repeat(avg[sub], 2 ** (n * (L - sub)), axis=1))
        tot = (run * mu).reshape(nd, 2 ** (n * lv), -1).sum(axis=2)
        out.append(tot / sums[lv])
    if squeeze:
        out = [o[0] for o in out]
    return out


def expanding_sum_rhs(a, m, gamma):
    """(m+1) sum_{i_1..i_m} a_{i_1}...a_{i_m} (sum_{j <= min i} a_j)^gamma by
    brute force over all m-tuples."""
    a = np.asarray(a, dtype=float)
    n = a.size
    prefix = np.cumsum(a)
    total = 0.0
    idx = [0] * m
    if m == 0:
        return float(prefix[-1] ** gamma) if n else 0.0
    while True:
        prod = 1.0
        mn = n
        for i in idx:
            prod *= a[i]
            if i < mn:
                mn = i
        total += prod * prefix[mn] ** gamma
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
