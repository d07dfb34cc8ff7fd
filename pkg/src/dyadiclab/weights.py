"""Matrix weights on a measured tree and their characteristics.

A weight stores one SPD d x d matrix per leaf (Morton order).  Characteristics
are exact finite maxima over the cubes (or cube pairs) of the tree; the only
sampled quantities are the scalar A_{p,inf} constant (directions on the
sphere) and operator norms for p != 2 (multistart ascent, a lower bound).
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import expm
from scipy.optimize import minimize

from . import _kernels
from .convexbody import _enclosing_weights
from .dyadic import CubeId, MeasuredTree, dyadic_distance, key_distance, lex_order
from .haar import HaarSystem
from .shifts import HaarShift, MartingaleMultiplier, expectation_matrix

SPD_FLOOR = 1e-10


def conjugate(p: float) -> float:
    return p / (p - 1.0)


def matrix_power(M, alpha: float) -> np.ndarray:
    """Spectral power of an SPD matrix (or a stack of them)."""
    M = np.asarray(M, dtype=float)
    if not np.allclose(M, np.swapaxes(M, -1, -2), rtol=0, atol=1e-12 * max(1.0, float(np.max(np.abs(M))))):
        raise ValueError("matrix is not symmetric")
    lam, U = np.linalg.eigh(M)
    if np.any(lam <= 0):
        raise ValueError("matrix is not positive definite")
    return (U * lam[..., None, :] ** alpha) @ np.swapaxes(U, -1, -2)


class MatrixWeight:
    def __init__(self, tree: MeasuredTree, values, floor: float = SPD_FLOOR):
        v = np.asarray(values, dtype=float)
        if v.ndim == 1:
            v = v[:, None, None]
        if v.shape[0] != tree.nleaves or v.shape[1] != v.shape[2]:
            raise ValueError("weight needs one square matrix per leaf")
        if np.max(np.abs(v - np.swapaxes(v, 1, 2))) > 1e-12 * max(1.0, float(np.max(np.abs(v)))):
            raise ValueError("weight values must be symmetric")
        v = 0.5 * (v + np.swapaxes(v, 1, 2))
        lam = np.linalg.eigvalsh(v)
        tr = np.trace(v, axis1=1, axis2=2)
        if np.any(lam[:, 0] <= floor * tr):
            raise ValueError("weight values must be positive definite")
        self.tree = tree
        self.values = v
        self.d = v.shape[1]
        self._powers = {}

    def power(self, alpha: float) -> np.ndarray:
        key = round(float(alpha), 15)
        if key not in self._powers:
            self._powers[key] = matrix_power(self.values, alpha)
        return self._powers[key]

    def dual(self, p: float) -> "MatrixWeight":
        """V = W^{-p'/p}."""
        return MatrixWeight(self.tree, self.power(-conjugate(p) / p))

    @classmethod
    def identity(cls, tree: MeasuredTree, d: int) -> "MatrixWeight":
        return cls(tree, np.broadcast_to(np.eye(d), (tree.nleaves, d, d)).copy())

    @classmethod
    def scalar(cls, tree: MeasuredTree, w) -> "MatrixWeight":
        return cls(tree, np.asarray(w, dtype=float)[:, None, None])

    def to_json(self) -> dict:
        """Values listed in lexicographic leaf order, like measure files."""
        vals = np.empty_like(self.values)
        vals[lex_order(self.tree.n, self.tree.L)] = self.values
        return {"d": self.d, "values": [m.reshape(-1).tolist() for m in vals]}


def weight_from_json(tree: MeasuredTree, data: dict) -> MatrixWeight:
    d = int(data["d"])
    vals = np.asarray(data["values"], dtype=float).reshape(-1, d, d)
    lex = tree.lex_masses()
    if vals.shape[0] != lex.size:
        raise ValueError("weight file does not match the tree")
    return MatrixWeight(tree, vals[lex_order(tree.n, tree.L)])


# generators --------------------------------------------------------------------

def _random_rotation(d: int, rng: np.random.Generator) -> np.ndarray:
    q, r = np.linalg.qr(rng.normal(size=(d, d)))
    return q * np.sign(np.diag(r))


def random_weight(tree: MeasuredTree, d: int, rng: np.random.Generator, kind: str = "independent",
                  kappa_max: float = 1e3) -> MatrixWeight:
    """Q diag(exp(u)) Q^T per leaf with condition number at most ``kappa_max``.

    ``independent``: u uniform in [-log(k)/2, log(k)/2] and Haar-random Q per
    leaf.  ``path``: u and the rotation generator are sums of per-cube
    increments along the path from the root, rescaled into the same range,
    so neighbouring leaves carry similar matrices.
    """
    half = 0.5 * np.log(kappa_max)
    nl = tree.nleaves
    if kind == "independent":
        u = rng.uniform(-half, half, size=(nl, d))
        Qs = np.stack([_random_rotation(d, rng) for _ in range(nl)])
    elif kind == "path":
        u = np.zeros((nl, d))
        skew = np.zeros((nl, d, d))
        for lv in range(tree.L + 1):
            span = 2 ** (tree.n * (tree.L - lv))
            inc = rng.normal(size=(tree.count(lv), d))
            u += np.repeat(inc, span, axis=0)
            s = rng.normal(size=(tree.count(lv), d, d)) * 0.5
            skew += np.repeat(s - np.swapaxes(s, 1, 2), span, axis=0)
        spread = np.max(u) - np.min(u)
        u = (u - np.min(u)) / (spread if spread > 0 else 1.0) * 2 * half - half
        Qs = np.stack([expm(k) for k in skew])
    else:
        raise ValueError(f"unknown weight kind {kind!r}")
    vals = np.einsum("xij,xj,xkj->xik", Qs, np.exp(u), Qs)
    return MatrixWeight(tree, 0.5 * (vals + np.swapaxes(vals, 1, 2)))


def spike_weight(tree: MeasuredTree, d: int, leaves, height: float, direction=None) -> MatrixWeight:
    """Identity except I + (height - 1) v v^T on the given leaves."""
    v = np.zeros(d)
    v[0] = 1.0
    if direction is not None:
        v = np.asarray(direction, dtype=float)
        v = v / np.linalg.norm(v)
    vals = np.broadcast_to(np.eye(d), (tree.nleaves, d, d)).copy()
    vals[np.asarray(leaves)] += (height - 1.0) * np.outer(v, v)
    return MatrixWeight(tree, vals)


# reducing operators ---------------------------------------------------------------

@dataclass
class ReducingOperator:
    cube: CubeId
    p: float
    matrix: np.ndarray
    c_lo: float = 1.0  # min over sampled e of |We| / rho(e)
    c_hi: float = 1.0  # max over sampled e of |We| / rho(e)

    @property
    def comparability(self) -> float:
        return self.c_hi / self.c_lo


def sphere_points(d: int, k: int) -> np.ndarray:
    """Deterministic quasi-uniform directions on a half sphere (antipodes are redundant)."""
    if d == 1:
        return np.ones((1, 1))
    if d == 2:
        th = np.pi * (np.arange(k) + 0.5) / k
        return np.stack([np.cos(th), np.sin(th)], axis=1)
    if d == 3:
        i = np.arange(k) + 0.5
        z = i / k  # upper hemisphere
        phi = np.pi * (1 + 5 ** 0.5) * i
        r = np.sqrt(1 - z * z)
        return np.stack([r * np.cos(phi), r * np.sin(phi), z], axis=1)
    rng = np.random.default_rng(0)
    x = rng.normal(size=(k, d))
    return x / np.linalg.norm(x, axis=1, keepdims=True)


def _cube_slice(tree: MeasuredTree, Q: CubeId) -> tuple:
    lo, hi = tree.leaf_range(Q)
    w = tree.leaf_masses[lo:hi] / tree.measure(Q)
    return lo, hi, w


def _lp_norms(A: np.ndarray, w: np.ndarray, p: float, E: np.ndarray) -> np.ndarray:
    """rho(e) = (sum_x w_x |A_x e|^p)^(1/p) for each row e of E."""
    vals = np.linalg.norm(np.einsum("xij,kj->kxi", A, E), axis=2)
    return (vals ** p @ w) ** (1 / p)


def reducing_operator(W: MatrixWeight, p: float, Q: CubeId, samples: int = 1024) -> ReducingOperator:
    """Matrix R with |R e| comparable to (avg_Q |W^{1/p} e|^p)^{1/p}.

    p = 2: R = (avg_Q W)^{1/2}, exact.  d = 1: exact scalar.  Otherwise R
    is the John ellipsoid of the unit ball of rho, computed as the polar of
    the minimal enclosing ellipsoid of gradient points of rho (points of the
    polar ball), so |R e| / rho(e) lies in [1, sqrt(d)] up to sampling.
    """
    if p <= 1:
        raise ValueError("p must exceed 1")
    tree = W.tree
    lo, hi, w = _cube_slice(tree, Q)
    if p == 2:
        M = np.einsum("x,xij->ij", w, W.values[lo:hi])
        return ReducingOperator(Q, p, matrix_power(0.5 * (M + M.T), 0.5))
    A = W.power(1.0 / p)[lo:hi]
    if W.d == 1:
        val = float((w @ A[:, 0, 0] ** p) ** (1 / p))
        return ReducingOperator(Q, p, np.array([[val]]))
    d = W.d
    E = sphere_points(d, samples)
    AE = np.einsum("xij,kj->kxi", A, E)  # (k, x, d)
    nrm = np.linalg.norm(AE, axis=2)
    rho = (nrm ** p @ w) ** (1 / p)
    # gradient of rho at e: rho^{1-p} sum_x w_x |A_x e|^{p-2} A_x^T A_x e
    coef = w * nrm ** (p - 2)
    G = np.einsum("kx,kxi,xij->kj", coef, AE, A) / (rho ** (p - 1))[:, None]
    X, eps, _ = _enclosing_weights(G, 1e-6)
    R = matrix_power(0.5 * (X + X.T) * d * (1 + eps), 0.5)
    Echeck = sphere_points(d, 4 * samples) if d > 1 else E
    ratio = np.linalg.norm(Echeck @ R, axis=1) / _lp_norms(A, w, p, Echeck)
    return ReducingOperator(Q, p, R, float(ratio.min()), float(ratio.max()))


# characteristics ----------------------------------------------------------------------

@dataclass
class ApReport:
    p: float
    value: float
    argmax: tuple
    variant: str
    N: int | None = None
    extra: dict = field(default_factory=dict)

    def to_json(self) -> dict:
        am = [[Q.level, list(Q.index)] for Q in self.argmax]
        return {"p": self.p, "value": self.value, "argmax": am, "variant": self.variant, "N": self.N, **self.extra}


class _PairTable:
    """avg_Q (avg_R |A(x) B(y)|^{p'} dmu(y))^{p/p'} dmu(x) for all cube pairs.

    A = W^{1/p}, B = V^{1/p'}.  ``block(lq, lr)`` is the (count(lq), count(lr))
    matrix of values for cubes at the two levels.
    """

    def __init__(self, W: MatrixWeight, V: MatrixWeight, p: float):
        self.tree = W.tree
        self.p = p
        pp = conjugate(p)
        N = _kernels.pair_opnorms(W.power(1.0 / p), V.power(1.0 / pp))
        P = N ** pp * self.tree.leaf_masses[None, :]
        self._inner = {}
        self._P = P
        self._blocks = {}

    def inner(self, lr: int) -> np.ndarray:
        if lr not in self._inner:
            t = self.tree
            span = 2 ** (t.n * (t.L - lr))
            s = self._P.reshape(t.nleaves, t.count(lr), span).sum(axis=2) / t.mu[lr][None, :]
            self._inner[lr] = s ** (self.p / conjugate(self.p))
        return self._inner[lr]

    def block(self, lq: int, lr: int) -> np.ndarray:
        if (lq, lr) not in self._blocks:
            t = self.tree
            F = self.inner(lr) * t.leaf_masses[:, None]
            span = 2 ** (t.n * (t.L - lq))
            self._blocks[(lq, lr)] = F.reshape(t.count(lq), span, -1).sum(axis=1) / t.mu[lq][:, None]
        return self._blocks[(lq, lr)]

    def diagonal(self, lv: int) -> np.ndarray:
        return np.diag(self.block(lv, lv))


def two_weight_ap(W: MatrixWeight, V: MatrixWeight, p: float) -> ApReport:
    tab = _PairTable(W, V, p)
    best, arg = -np.inf, None
    for lv in range(W.tree.L + 1):
        dg = tab.diagonal(lv)
        k = int(np.argmax(dg))
        if dg[k] > best:
            best, arg = float(dg[k]), (W.tree.cube(lv, k),)
    return ApReport(p, best, arg, "two_weight")


def ap_constant(W: MatrixWeight, p: float) -> ApReport:
    rep = two_weight_ap(W, W.dual(p), p)
    rep.variant = "Ap"
    return rep


def _level_distance(n: int, lq: int, lr: int, cq: int, cr: int) -> np.ndarray:
    """dist between every cube at level lq and every cube at level lr."""
    a = min(lq, lr)
    q = (np.arange(cq) >> (n * (lq - a)))[:, None]
    r = (np.arange(cr) >> (n * (lr - a)))[None, :]
    lca = np.full((cq, cr), a)
    diff = q != r
    while np.any(diff):
        q = q >> n
        r = r >> n
        lca = lca - diff
        diff = q != r
    return (lq - lca) + (lr - lca)


def _m_level(hs: HaarSystem, lv: int) -> np.ndarray:
    return hs.m[lv] if lv < hs.levels else np.full(hs.tree.count(lv), np.nan)


def c_pb(hs: HaarSystem, p: float, Q: CubeId, R: CubeId) -> float:
    """1 if Q = R, else m(Q)^{p/2} m(R)^{p/2} / (mu(R) mu(Q)^{p-1})."""
    if Q == R:
        return 1.0
    t = hs.tree
    mq, mr = hs.m_of(Q), hs.m_of(R)
    return mq ** (p / 2) * mr ** (p / 2) / (t.measure(R) * t.measure(Q) ** (p - 1))


def _c_block(hs: HaarSystem, p: float, lq: int, lr: int) -> np.ndarray:
    t = hs.tree
    mq, mr = hs.m[lq], hs.m[lr]
    return (mq[:, None] ** (p / 2) * mr[None, :] ** (p / 2)) / (t.mu[lr][None, :] * t.mu[lq][:, None] ** (p - 1))


def _pair_sup(W: MatrixWeight, p: float, hs: HaarSystem, allowed) -> tuple:
    """sup of c_p^b(Q,R) * pair value over pairs selected by ``allowed(lq, lr)``
    (a boolean (count(lq), count(lr)) mask or None).  Off-diagonal pairs are
    restricted to non-leaf cubes, where m is defined."""
    tree = W.tree
    tab = _PairTable(W, W.dual(p), p)
    best, arg = -np.inf, None
    for lv in range(tree.L + 1):
        dg = tab.diagonal(lv)
        k = int(np.argmax(dg))
        if dg[k] > best:
            best, arg = float(dg[k]), (tree.cube(lv, k), tree.cube(lv, k))
    for lq in range(hs.levels):
        for lr in range(hs.levels):
            mask = allowed(lq, lr)
            if mask is None or not np.any(mask):
                continue
            if lq == lr:
                mask = mask & ~np.eye(tree.count(lq), dtype=bool)
            vals = np.where(mask, _c_block(hs, p, lq, lr) * tab.block(lq, lr), -np.inf)
            i, j = np.unravel_index(int(np.argmax(vals)), vals.shape)
            if vals[i, j] > best:
                best, arg = float(vals[i, j]), (tree.cube(lq, int(i)), tree.cube(lr, int(j)))
    return best, arg


def apN_constant(W: MatrixWeight, p: float, N: int, hs: HaarSystem) -> ApReport:
    """[W]_{A_p^N}: sup over pairs with dist(Q, R) <= N + 2."""
    if N < 0:
        raise ValueError("N must be nonnegative")
    tree = W.tree
    if hs.levels < 1:
        raise ValueError("range empty: the tree has no Haar functions")

    def allowed(lq, lr):
        if abs(lq - lr) > N + 2:
            return None
        return _level_distance(tree.n, lq, lr, tree.count(lq), tree.count(lr)) <= N + 2

    val, arg = _pair_sup(W, p, hs, allowed)
    rep = ApReport(p, val, arg, "ApN", N)
    return rep


def apb_constant(W: MatrixWeight, p: float, hs: HaarSystem) -> ApReport:
    """Pairs R in ch(Q^) u ch(Q^(2)), or Q in ch(R^(2))."""
    tree = W.tree
    n = tree.n

    def allowed(lq, lr):
        cq, cr = tree.count(lq), tree.count(lr)
        q = np.arange(cq)[:, None]
        r = np.arange(cr)[None, :]
        if lr == lq and lq >= 1:  # R a child of Q^
            return np.broadcast_to((q >> n) == (r >> n), (cq, cr))
        if lr == lq - 1 and lq >= 2:  # R a child of Q^(2)
            return np.broadcast_to((q >> (2 * n)) == (r >> n), (cq, cr))
        if lq == lr - 1 and lr >= 2:  # Q a child of R^(2)
            return np.broadcast_to((r >> (2 * n)) == (q >> n), (cq, cr))
        return None

    val, arg = _pair_sup(W, p, hs, allowed)
    return ApReport(p, val, arg, "Apb")


def apN_reducing(W: MatrixWeight, p: float, N: int, hs: HaarSystem) -> ApReport:
    """sup c_p^b(I, J) |W_I V_J|^p with reducing operators (p and p')."""
    tree = W.tree
    V = W.dual(p)
    pp = conjugate(p)
    Wr, Vr = {}, {}
    cubes = [tree.cube(lv, k) for lv in range(hs.levels) for k in range(tree.count(lv))]
    for Q in cubes:
        Wr[Q] = reducing_operator(W, p, Q).matrix
        Vr[Q] = reducing_operator(V, pp, Q).matrix
    best, arg = -np.inf, None
    keys = {Q: tree.key(Q) for Q in cubes}
    for I in cubes:
        for J in cubes:
            if abs(I.level - J.level) > N + 2:
                continue
            if key_distance(tree.n, I.level, keys[I], J.level, keys[J]) > N + 2:
                continue
            v = c_pb(hs, p, I, J) * np.linalg.norm(Wr[I] @ Vr[J], 2) ** p
            if v > best:
                best, arg = float(v), (I, J)
    return ApReport(p, best, arg, "ApN_reducing", N)


def fibonacci_directions(d: int, k: int = 1024) -> np.ndarray:
    return sphere_points(d, k)


def ap_infty_sc(W: MatrixWeight, p: float, directions: int = 1024, steps: int = 20) -> ApReport:
    """Sampled sup over unit e of the Fujii-Wilson A_inf constant of |W^{1/p} e|^p.

    The inner constant is exact for each direction; the outer supremum is a
    lower bound from ``directions`` quasi-uniform samples followed by
    ``steps`` rounds of pattern search around the best one.
    """
    tree = W.tree
    A = W.power(1.0 / p)
    mu = tree.leaf_masses

    def values(E):
        w = np.linalg.norm(np.einsum("xij,kj->kxi", A, E), axis=2) ** p
        levels = _kernels.fujii_wilson(w, mu, tree.n, tree.L)
        stacked = np.concatenate([np.asarray(v).reshape(E.shape[0], -1) for v in levels], axis=1)
        return stacked.max(axis=1)

    E = sphere_points(W.d, directions if W.d > 1 else 1)
    vals = values(E)
    k = int(np.argmax(vals))
    e, best = E[k], float(vals[k])
    if W.d > 1:
        step = np.pi / np.sqrt(directions)
        for _ in range(steps):
            # tangent basis at e
            B = np.linalg.svd(np.eye(W.d) - np.outer(e, e))[0][:, : W.d - 1].T
            cand = np.vstack([e + s * step * b for b in B for s in (1, -1)])
            cand /= np.linalg.norm(cand, axis=1, keepdims=True)
            cv = values(cand)
            j = int(np.argmax(cv))
            if cv[j] > best:
                e, best = cand[j], float(cv[j])
            else:
                step *= 0.5
    return ApReport(p, best, (), "Ap_infty_sc", extra={"direction": e.tolist(), "sampled": W.d > 1})


# operator norms ------------------------------------------------------------------

@dataclass
class ExpectationOperator:
    tree: MeasuredTree
    cube: CubeId

    def matrix(self) -> np.ndarray:
        return expectation_matrix(self.tree, self.cube)


def operator_matrix(op) -> np.ndarray:
    if isinstance(op, (HaarShift, MartingaleMultiplier, ExpectationOperator)):
        return op.matrix()
    return np.asarray(op, dtype=float)


@dataclass
class NormReport:
    value: float
    exact: bool
    p: float

    def to_json(self) -> dict:
        return {"value": self.value, "exact": self.exact, "kind": "exact" if self.exact else "lower bound", "p": self.p}


def weighted_operator_norm(op, W: MatrixWeight, p: float, starts: int = 16, seed: int = 0) -> NormReport:
    """||T||_{L^p(W) -> L^p(W)} for a scalar leaf operator acting componentwise.

    p = 2: the largest singular value of G (T x I) G^{-1} with
    G = diag(sqrt(mu(x)) W(x)^{1/2}), exact.  p != 2: best of ``starts``
    L-BFGS ascents of the norm ratio, a certified lower bound.
    """
    M = operator_matrix(op)
    tree, d = W.tree, W.d
    mu = tree.leaf_masses
    nl = tree.nleaves
    A = W.power(1.0 / p)
    Ai = W.power(-1.0 / p)
    big = np.kron(M, np.eye(d)).reshape(nl, d, nl, d)
    K = np.einsum("xij,xjyk,ykl->xiyl", A, big, Ai).reshape(nl * d, nl * d)
    if p == 2:
        s = np.sqrt(np.repeat(mu, d))
        return NormReport(float(np.linalg.norm(s[:, None] * K / s[None, :], 2)), True, p)
    mw = np.repeat(mu, d)

    def logsum(v):
        blocks = np.linalg.norm(v.reshape(nl, d), axis=1)
        S = float(mu @ blocks ** p)
        g = (mu * np.maximum(blocks, 1e-300) ** (p - 2))[:, None] * v.reshape(nl, d)
        return S, g.reshape(-1)

    def objective(u):
        Su, gu = logsum(u)
        v = K @ u
        Sv, gv = logsum(v)
        if Su <= 0 or Sv <= 0:
            return 0.0, np.zeros_like(u)
        val = (np.log(Sv) - np.log(Su)) / p
        grad = (K.T @ gv / Sv - gu / Su)
        return -val, -grad

    rng = np.random.default_rng(seed)
    s = np.sqrt(mw)
    top = np.linalg.svd(s[:, None] * K / s[None, :])[2][0] / s
    best = 0.0
    for i in range(starts):
        u0 = top if i == 0 else rng.normal(size=nl * d)
        res = minimize(objective, u0, jac=True, method="L-BFGS-B", options={"maxiter": 300})
        best = max(best, float(np.exp(-res.fun)), float(np.exp(-objective(u0)[0])))
    return NormReport(best, False, p)


def expectation_norm_exact(W: MatrixWeight, Q: CubeId) -> float:
    """||E_Q||_{L^2(W)} = |<W>_Q^{1/2} <W^{-1}>_Q^{1/2}|."""
    lo, hi, w = _cube_slice(W.tree, Q)
    a = np.einsum("x,xij->ij", w, W.values[lo:hi])
    b = np.einsum("x,xij->ij", w, W.power(-1.0)[lo:hi])
    return float(np.linalg.norm(matrix_power(0.5 * (a + a.T), 0.5) @ matrix_power(0.5 * (b + b.T), 0.5), 2))


# square function --------------------------------------------------------------------

def square_function(S, W: MatrixWeight, p: float, g, reducing: dict | None = None) -> np.ndarray:
    """(sum_{Q in S} <|W_Q^{-1} W^{1/p}| |g|>_Q^{p'} 1_Q)^{1/p'}, leafwise."""
    tree = W.tree
    pp = conjugate(p)
    g = np.asarray(g, dtype=float)
    ga = np.abs(g) if g.ndim == 1 else np.linalg.norm(g, axis=1)
    A = W.power(1.0 / p)
    out = np.zeros(tree.nleaves)
    for lv, k in sorted(S.cubes):
        Q = tree.cube(lv, k)
        R = reducing[Q] if reducing and Q in reducing else reducing_operator(W, p, Q).matrix
        lo, hi, w = _cube_slice(tree, Q)
        Ri = np.linalg.inv(R)
        nr = np.linalg.norm(np.einsum("ij,xjk->xik", Ri, A[lo:hi]), ord=2, axis=(1, 2))
        out[lo:hi] += float(w @ (nr * ga[lo:hi])) ** pp
    return out ** (1 / pp)


def lp_norm(tree: MeasuredTree, f, p: float) -> float:
    f = np.asarray(f, dtype=float)
    a = np.abs(f) if f.ndim == 1 else np.linalg.norm(f, axis=1)
    return float((tree.leaf_masses @ a ** p) ** (1 / p))


# necessity experiment ------------------------------------------------------------------

def rank_one_shift(hs: HaarSystem, source: CubeId, target: CubeId) -> HaarShift:
    """T f = <f, h_source> h_target as a shift of the minimal complexity."""
    tree = hs.tree
    a, b = source.level, target.level
    ks, kt = tree.key(source), tree.key(target)
    lca = min(a, b)
    x, y = ks >> (tree.n * (a - lca)), kt >> (tree.n * (b - lca))
    while x != y:
        x >>= tree.n
        y >>= tree.n
        lca -= 1
    return HaarShift(hs, a - lca, b - lca, [lca], [ks], [kt], [1.0])


def necessity_experiment(W: MatrixWeight, p: float, N: int, J: CubeId, K: CubeId, hs: HaarSystem) -> dict:
    """Both sides of c_p^b(J, K) |W_J V_K|^p <~ C^{3p}.

    C is taken as the largest of the exact norms (p = 2; lower bounds
    otherwise) of the shifts the argument tests against: the rank-one shift
    f -> <f, h_K^> h_J^ when J and K are disjoint, and the expectations E_J
    and E_K standing in for the complexity-(0, 0) bound on W_Q V_Q.
    """
    tree = W.tree
    dist = dyadic_distance(tree, J, K)
    if dist > N + 2:
        raise ValueError(f"dist(J, K) = {dist} exceeds N + 2 = {N + 2}")
    if J.level == 0 or K.level == 0 or max(J.level, K.level) > hs.levels - 1:
        raise ValueError("J and K need Haar parents and their own Haar functions")
    pp = conjugate(p)
    WJ = reducing_operator(W, p, J).matrix
    VK = reducing_operator(W.dual(p), pp, K).matrix
    lhs = c_pb(hs, p, J, K) * np.linalg.norm(WJ @ VK, 2) ** p
    norms = {}
    if not (tree.contains(J, K) or tree.contains(K, J)):
        T = rank_one_shift(hs, tree.parent(K), tree.parent(J))
        norms["rank_one"] = weighted_operator_norm(T, W, p).value
    for name, Q in (("E_J", J), ("E_K", K)):
        norms[name] = (expectation_norm_exact(W, Q) if p == 2
                       else weighted_operator_norm(ExpectationOperator(tree, Q), W, p).value)
    C = max(norms.values())
    return {"lhs": float(lhs), "shift_norm": float(C), "norms": norms, "ratio": float(lhs / C ** (3 * p)),
            "dist": dist, "exact": p == 2}
