"""Carleson embeddings with a cube-dependent family of scalar weights.

A family stores, for every level l, one leaf array ``F[l]`` whose restriction
to a cube Q at level l is w_Q (the cubes of a level partition the leaves).
Carleson data alpha is a list of per-level arrays over cubes (Morton keys).
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.linalg import eigh
from scipy.optimize import minimize

from . import _kernels
from .dyadic import MeasuredTree
from .shifts import cube_averages, expand

MAX_BRUTE_LENGTH = 12


@dataclass
class WeightFamily:
    tree: MeasuredTree
    F: np.ndarray  # (L+1, nleaves); F[l, x] = w_Q(x) for the level-l cube Q containing x
    normalization: str = "raw"  # or "unit": <w_Q>_Q = 1

    def __post_init__(self):
        self.F = np.asarray(self.F, dtype=float)
        if self.F.shape != (self.tree.L + 1, self.tree.nleaves):
            raise ValueError("family needs one leaf array per level")
        if not np.all(self.F > 0) or not np.all(np.isfinite(self.F)):
            raise ValueError("family weights must be positive and finite")

    @classmethod
    def constant(cls, tree: MeasuredTree, w) -> "WeightFamily":
        w = np.asarray(w, dtype=float)
        return cls(tree, np.broadcast_to(w, (tree.L + 1, tree.nleaves)).copy())

    def averages(self, lv: int) -> np.ndarray:
        """<w_Q>_Q for the cubes at level lv."""
        return cube_averages(self.tree, self.F[lv])[lv]

    def normalized(self) -> "WeightFamily":
        """w_Q / <w_Q>_Q."""
        G = np.stack([self.F[lv] / expand(self.tree, lv, self.averages(lv)) for lv in range(self.tree.L + 1)])
        return WeightFamily(self.tree, G, "unit")

    def scaled(self, c: list) -> "WeightFamily":
        """w_Q -> c_Q w_Q with per-level arrays of cube factors."""
        G = np.stack([self.F[lv] * expand(self.tree, lv, np.asarray(c[lv], dtype=float)) for lv in range(self.tree.L + 1)])
        return WeightFamily(self.tree, G)


def check_alpha(tree: MeasuredTree, alpha) -> list:
    out = []
    for lv in range(tree.L + 1):
        a = np.asarray(alpha[lv], dtype=float)
        if a.shape != (tree.count(lv),):
            raise ValueError(f"alpha at level {lv} needs {tree.count(lv)} entries")
        if np.any(a < 0):
            raise ValueError("alpha must be nonnegative")
        out.append(a)
    return out


def family_from_matrix_weight(W, p: float, reducing: dict | None = None) -> WeightFamily:
    """w_Q = |W_Q^{-1} W^{1/p}|^p on Q, with W_Q the reducing operator of W on Q."""
    from .weights import reducing_operator
    tree = W.tree
    A = W.power(1.0 / p)
    F = np.zeros((tree.L + 1, tree.nleaves))
    for lv in range(tree.L + 1):
        span = 2 ** (tree.n * (tree.L - lv))
        for k in range(tree.count(lv)):
            Q = tree.cube(lv, k)
            R = reducing[Q] if reducing and Q in reducing else reducing_operator(W, p, Q).matrix
            lo, hi = k * span, (k + 1) * span
            M = np.einsum("ij,xjk->xik", np.linalg.inv(R), A[lo:hi])
            F[lv, lo:hi] = np.linalg.norm(M, ord=2, axis=(1, 2)) ** p
    return WeightFamily(tree, F)


def random_family(tree: MeasuredTree, rng: np.random.Generator, spread: float = 2.0, spikes: int = 0,
                  spike_height: float = 1e3) -> WeightFamily:
    """Independent log-uniform w_Q per cube; ``spikes`` leaves per level get
    multiplied by ``spike_height`` (adversarial for compatibility)."""
    F = np.exp(rng.uniform(-spread, spread, size=(tree.L + 1, tree.nleaves)))
    for lv in range(tree.L + 1):
        if spikes:
            idx = rng.choice(tree.nleaves, size=min(spikes, tree.nleaves), replace=False)
            F[lv, idx] *= spike_height
    return WeightFamily(tree, F)


def compatibility_constant(family: WeightFamily) -> float:
    """max over Q in P of ||w_P / w_Q||_{L^inf(Q)} <w_Q>_Q / <w_P>_Q (always >= 1)."""
    tree = family.tree
    best = 1.0
    for lq in range(tree.L + 1):
        span = 2 ** (tree.n * (tree.L - lq))
        wq_avg = family.averages(lq)
        for lp in range(lq + 1):
            ratio = (family.F[lp] / family.F[lq]).reshape(tree.count(lq), span).max(axis=1)
            wp_avg = cube_averages(tree, family.F[lp])[lq]
            best = max(best, float(np.max(ratio * wq_avg / wp_avg)))
    return best


def testing_constant_C2(family: WeightFamily, alpha, p: float) -> float:
    """max_P (1 / (mu(P) <w_P>_P)) sum_{Q in D(P)} <w_P>_Q <w_Q>_Q^{p-1} alpha_Q."""
    tree = family.tree
    alpha = check_alpha(tree, alpha)
    own = [family.averages(lv) ** (p - 1) * alpha[lv] for lv in range(tree.L + 1)]
    best = 0.0
    for lp in range(tree.L + 1):
        avgs = cube_averages(tree, family.F[lp])
        total = np.zeros(tree.count(lp))
        for lq in range(lp, tree.L + 1):
            contrib = avgs[lq] * own[lq]
            total += contrib.reshape(tree.count(lp), -1).sum(axis=1)
        val = total / (tree.mu[lp] * avgs[lp])
        best = max(best, float(np.max(val)))
    return best


def _embedding_matrix(family: WeightFamily, p: float) -> np.ndarray:
    """Rows Q (level-major), entries w_Q(x)^{1/p'} mu(x) / mu(Q)."""
    tree = family.tree
    pp = p / (p - 1)
    rows = []
    for lv in range(tree.L + 1):
        span = 2 ** (tree.n * (tree.L - lv))
        vals = family.F[lv] ** (1 / pp) * tree.leaf_masses / np.repeat(tree.mu[lv], span)
        block = np.zeros((tree.count(lv), tree.nleaves))
        for k in range(tree.count(lv)):
            block[k, k * span:(k + 1) * span] = vals[k * span:(k + 1) * span]
        rows.append(block)
    return np.vstack(rows)


@dataclass
class C1Result:
    value: float
    method: str  # "exact" or "ascent"
    witness: np.ndarray | None = None


def embedding_constant_C1(family: WeightFamily, alpha, p: float, method: str = "auto", starts: int = 8,
                          seed: int = 0) -> C1Result:
    """Best constant in sum_Q <w_Q^{1/p'} f>_Q^p alpha_Q <= C1 ||f||_p^p.

    ``exact`` (p = 2 only): the largest generalized eigenvalue of
    (M^T diag(alpha) M, diag(mu)).  ``ascent``: bounded L-BFGS over f >= 0,
    started from the testing functions w_P^{1/p} 1_P of the largest testing
    ratios and from random points; the result is a lower bound.
    """
    tree = family.tree
    alpha = check_alpha(tree, alpha)
    a = np.concatenate(alpha)
    M = _embedding_matrix(family, p)
    mu = tree.leaf_masses
    if method == "auto":
        method = "exact" if p == 2 else "ascent"
    if method == "exact":
        if p != 2:
            raise ValueError("exact method needs p = 2")
        A = M.T @ (a[:, None] * M)
        vals, vecs = eigh(0.5 * (A + A.T), np.diag(mu))
        return C1Result(float(max(vals[-1], 0.0)), "exact", vecs[:, -1])

    def objective(f):
        h = M @ f
        num = float(a @ h ** p)
        den = float(mu @ f ** p)
        if num <= 0 or den <= 0:
            return 0.0, np.zeros_like(f)
        g_num = M.T @ (a * p * h ** (p - 1))
        g_den = p * mu * f ** (p - 1)
        return -(np.log(num) - np.log(den)), -(g_num / num - g_den / den)

    def ratio(f):
        den = float(mu @ f ** p)
        return float(a @ (M @ f) ** p) / den if den > 0 else 0.0

    rng = np.random.default_rng(seed)
    starts_list = []
    # testing functions of the cubes with the largest testing ratios
    cand = []
    for lv in range(tree.L + 1):
        span = 2 ** (tree.n * (tree.L - lv))
        for k in range(tree.count(lv)):
            f = np.zeros(tree.nleaves)
            f[k * span:(k + 1) * span] = family.F[lv, k * span:(k + 1) * span] ** (1 / p)
            cand.append((ratio(f), f))
    cand.sort(key=lambda c: -c[0])
    best, wit = cand[0][0], cand[0][1]
    starts_list.extend(f for _, f in cand[: max(1, starts // 2)])
    starts_list.extend(rng.uniform(0.1, 1.0, size=tree.nleaves) for _ in range(starts - len(starts_list)))
    bounds = [(1e-12, None)] * tree.nleaves
    for f0 in starts_list:
        f0 = np.maximum(f0, 1e-12)
        res = minimize(objective, f0, jac=True, method="L-BFGS-B", bounds=bounds, options={"maxiter": 500})
        r = ratio(res.x)
        if r > best:
            best, wit = r, res.x
    return C1Result(best, "ascent", wit)


def classical_carleson(tree: MeasuredTree, w, alpha, p: float) -> tuple:
    """Independent route for a single weight w: (C1 at p = 2, C2).

    C2 from the weighted formulation (1/(mu(P)<w>_P)) sum <w>_Q^p alpha_Q;
    C1 by substituting g = f w^{-1/2} and solving the unweighted-form
    eigenproblem in the measure w dmu with coefficients alpha_Q <w>_Q^2.
    """
    w = np.asarray(w, dtype=float)
    alpha = check_alpha(tree, alpha)
    avgs = cube_averages(tree, w)
    c2 = 0.0
    for lp in range(tree.L + 1):
        tot = np.zeros(tree.count(lp))
        for lq in range(lp, tree.L + 1):
            tot += (avgs[lq] ** p * alpha[lq]).reshape(tree.count(lp), -1).sum(axis=1)
        c2 = max(c2, float(np.max(tot / (tree.mu[lp] * avgs[lp]))))
    c1 = float("nan")
    if p == 2:
        nu = w * tree.leaf_masses
        G = np.zeros((tree.nleaves, tree.nleaves))
        for lv in range(tree.L + 1):
            span = 2 ** (tree.n * (tree.L - lv))
            nuQ = nu.reshape(-1, span).sum(axis=1)
            for k in range(tree.count(lv)):
                sl = slice(k * span, (k + 1) * span)
                beta = alpha[lv][k] * avgs[lv][k] ** 2
                if beta:
                    v = nu[sl] / nuQ[k]  # <g>^nu_Q = v . g
                    G[sl, sl] += beta * np.outer(v, v)
        vals = eigh(G, np.diag(nu), eigvals_only=True)
        c1 = float(max(vals[-1], 0.0))
    return c1, c2


@dataclass
class EmbeddingReport:
    p: float
    A: float
    C2: float
    C1: float
    method: str
    lower_ok: bool
    upper_ratio: float

    def to_json(self) -> dict:
        return {"p": self.p, "A": self.A, "C2": self.C2, "C1": self.C1, "method": self.method,
                "bound_check": {"lower_ok": self.lower_ok, "upper_ratio": self.upper_ratio}}


def verify_embedding_bounds(family: WeightFamily, alpha, p: float, **kw) -> EmbeddingReport:
    """A^{-(p-1)} C2 <= C1 and C1 / (A^{1+1/p'} C2)."""
    A = compatibility_constant(family)
    C2 = testing_constant_C2(family, alpha, p)
    r = embedding_constant_C1(family, alpha, p, **kw)
    pp = p / (p - 1)
    lower_ok = A ** (-(p - 1)) * C2 <= r.value * (1 + 1e-9) + 1e-300
    upper = r.value / (A ** (1 + 1 / pp) * C2) if C2 > 0 else 0.0
    return EmbeddingReport(p, A, C2, r.value, r.method, bool(lower_ok), float(upper))


# expanding sums ----------------------------------------------------------------

def expanding_sum_sides(a, p: float) -> tuple:
    """(lhs, rhs) of (sum a)^p <= (m+1) sum a_{i1}..a_{im} (sum_{j<=min i} a_j)^gamma, p = m + gamma."""
    a = np.asarray(a, dtype=float)
    if a.ndim != 1 or np.any(a < 0):
        raise ValueError("need a nonnegative sequence")
    if a.size > MAX_BRUTE_LENGTH:
        raise ValueError(f"brute force is limited to length {MAX_BRUTE_LENGTH}")
    if p <= 1:
        raise ValueError("p must exceed 1")
    m = int(np.floor(p))
    gamma = p - m
    return float(np.sum(a) ** p), float(_kernels.expanding_sum_rhs(a, m, gamma))


def expanding_sum_check(a, p: float) -> dict:
    lhs, rhs = expanding_sum_sides(a, p)
    return {"lhs": lhs, "rhs": rhs, "ok": bool(lhs <= rhs * (1 + 1e-12))}


def expanding_sum_closed_form(a, p: float) -> float:
    """The right side via tail sums: tuples with min index k contribute
    S_k^m - S_{k+1}^m where S_k = sum_{j >= k} a_j."""
    a = np.asarray(a, dtype=float)
    m = int(np.floor(p))
    gamma = p - m
    tails = np.concatenate([np.cumsum(a[::-1])[::-1], [0.0]])
    prefix = np.cumsum(a)
    return float((m + 1) * np.sum(prefix ** gamma * (tails[:-1] ** m - tails[1:] ** m)))
