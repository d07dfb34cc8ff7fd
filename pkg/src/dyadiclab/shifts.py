"""Haar shifts, martingale multipliers, kernel normalization checks, the
nonhomogeneous Calderon-Zygmund decomposition and weak-type experiments.

Leaf functions are arrays of shape (nleaves,) or (nleaves, d) in Morton order.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np

from .dyadic import CubeId, MeasuredTree, StructureError
from .haar import HaarSystem


def _check_leaf_function(tree: MeasuredTree, f) -> np.ndarray:
    f = np.asarray(f, dtype=float)
    if f.shape[0] != tree.nleaves:
        raise StructureError(f"function has {f.shape[0]} leaves, tree has {tree.nleaves}")
    return f


def cube_averages(tree: MeasuredTree, f: np.ndarray) -> list:
    """<f>_Q for every cube, per level (Morton order); works for vector f."""
    f = np.asarray(f, dtype=float)
    w = f * (tree.leaf_masses if f.ndim == 1 else tree.leaf_masses[:, None])
    sums = [None] * (tree.L + 1)
    sums[tree.L] = w
    for level in range(tree.L - 1, -1, -1):
        kids = sums[level + 1].reshape((tree.count(level), tree.nchild) + w.shape[1:])
        sums[level] = kids.sum(axis=1)
    out = []
    for level in range(tree.L + 1):
        mu = tree.mu[level] if f.ndim == 1 else tree.mu[level][:, None]
        out.append(sums[level] / mu)
    return out


def expand(tree: MeasuredTree, level: int, values: np.ndarray) -> np.ndarray:
    """Leafwise extension of per-cube values at ``level``."""
    return np.repeat(values, 2 ** (tree.n * (tree.L - level)), axis=0)


# Haar shifts -----------------------------------------------------------------

@dataclass
class HaarShift:
    """Sparse coefficient table c^Q_{J,K}, one entry per (Q, J, K).

    Arrays ``q_level``, ``j_key``, ``k_key`` and ``c`` are parallel; J sits at
    level ``q_level + s`` and K at ``q_level + t`` (Morton keys).  Q itself is
    implied: it is the ancestor of J by ``s`` generations.
    """

    haar: HaarSystem
    s: int
    t: int
    q_level: np.ndarray
    j_key: np.ndarray
    k_key: np.ndarray
    c: np.ndarray
    _matrix: np.ndarray | None = field(default=None, repr=False)

    def __post_init__(self):
        self.q_level = np.asarray(self.q_level, dtype=np.int64)
        self.j_key = np.asarray(self.j_key, dtype=np.int64)
        self.k_key = np.asarray(self.k_key, dtype=np.int64)
        self.c = np.asarray(self.c, dtype=float)
        tree = self.haar.tree
        if self.c.size and np.max(np.abs(self.c)) > 1:
            raise ValueError("shift coefficients must satisfy |c| <= 1")
        if self.q_level.size:
            if self.q_level.min() < 0 or (self.q_level + max(self.s, self.t)).max() > tree.L - 1:
                raise ValueError("shift keys reach below the last Haar level")
            qj = self.j_key >> (tree.n * self.s)
            qk = self.k_key >> (tree.n * self.t)
            if np.any(qj != qk):
                raise ValueError("J and K must share the cube Q")

    @property
    def tree(self) -> MeasuredTree:
        return self.haar.tree

    def q_key(self) -> np.ndarray:
        return self.j_key >> (self.tree.n * self.s)

    def entries(self):
        """Yield (Q, J, K, c) with CubeIds."""
        tree = self.tree
        for lq, jk, kk, c in zip(self.q_level, self.j_key, self.k_key, self.c):
            lq = int(lq)
            yield (tree.cube(lq, int(jk) >> (tree.n * self.s)), tree.cube(lq + self.s, int(jk)),
                   tree.cube(lq + self.t, int(kk)), float(c))

    def adjoint(self) -> "HaarShift":
        return HaarShift(self.haar, self.t, self.s, self.q_level, self.k_key, self.j_key, self.c)

    def restrict(self, mask) -> "HaarShift":
        mask = np.asarray(mask, dtype=bool)
        return HaarShift(self.haar, self.s, self.t, self.q_level[mask], self.j_key[mask], self.k_key[mask], self.c[mask])

    def coefficient_matrix(self) -> np.ndarray:
        """A with A[row(K), row(J)] = c, rows indexing the Haar matrix."""
        hs = self.haar
        nrows = sum(self.tree.count(lv) for lv in range(hs.levels))
        A = np.zeros((nrows, nrows))
        offs = np.array([hs.row_offset(lv) for lv in range(hs.levels)] + [nrows])
        rj = offs[self.q_level + self.s] + self.j_key
        rk = offs[self.q_level + self.t] + self.k_key
        np.add.at(A, (rk, rj), self.c)
        return A

    def matrix(self) -> np.ndarray:
        """Leaf matrix M with Tf = M @ f (scalar f)."""
        if self._matrix is None:
            H = self.haar.dense()
            A = self.coefficient_matrix()
            self._matrix = H.T @ A @ (H * self.tree.leaf_masses)
        return self._matrix

    def to_json(self) -> list:
        out = []
        for Q, J, K, c in self.entries():
            out.append({"Q": [Q.level, list(Q.index)], "J": [J.level, list(J.index)], "K": [K.level, list(K.index)], "c": c})
        return out


def shift_from_entries(hs: HaarSystem, s: int, t: int, entries) -> HaarShift:
    """Build from (Q, J, K, c) tuples of CubeIds."""
    tree = hs.tree
    ql, jk, kk, cc = [], [], [], []
    for Q, J, K, c in entries:
        Q, J, K = (CubeId(int(x[0]), tuple(x[1])) for x in (Q, J, K))
        if J.level != Q.level + s or K.level != Q.level + t:
            raise ValueError(f"entry ({Q}, {J}, {K}) does not match complexity ({s}, {t})")
        if not (tree.contains(Q, J) and tree.contains(Q, K)):
            raise ValueError(f"J or K outside Q in entry ({Q}, {J}, {K})")
        ql.append(Q.level)
        jk.append(tree.key(J))
        kk.append(tree.key(K))
        cc.append(c)
    return HaarShift(hs, s, t, ql, jk, kk, cc)


def shift_from_json(hs: HaarSystem, data, s: int | None = None, t: int | None = None) -> HaarShift:
    rows = [(e["Q"], e["J"], e["K"], e["c"]) for e in data]
    if rows and s is None:
        s = rows[0][1][0] - rows[0][0][0]
        t = rows[0][2][0] - rows[0][0][0]
    return shift_from_entries(hs, s or 0, t or 0, rows)


def full_pattern(hs: HaarSystem, s: int, t: int, levels=None):
    """Every structurally valid (q_level, j_key, k_key) triple."""
    tree = hs.tree
    n = tree.n
    ql, jk, kk = [], [], []
    top = hs.levels - max(s, t)
    for lq in range(max(top, 0)) if levels is None else levels:
        if lq >= top:
            continue
        nq = tree.count(lq)
        q = np.repeat(np.arange(nq), 2 ** (n * (s + t)))
        js = np.tile(np.repeat(np.arange(2 ** (n * s)), 2 ** (n * t)), nq)
        ks = np.tile(np.arange(2 ** (n * t)), nq * 2 ** (n * s))
        ql.append(np.full(q.size, lq))
        jk.append(q * 2 ** (n * s) + js)
        kk.append(q * 2 ** (n * t) + ks)
    if not ql:
        return np.zeros(0, int), np.zeros(0, int), np.zeros(0, int)
    return np.concatenate(ql), np.concatenate(jk), np.concatenate(kk)


def random_shift(hs: HaarSystem, s: int, t: int, rng: np.random.Generator, kind: str = "uniform",
                 delta: float = 0.5, density: float = 1.0) -> HaarShift:
    """Random coefficients: ``uniform`` in [-1, 1], ``nondegenerate`` with |c| in [delta, 1],
    or ``signs`` in {-1, 1}."""
    ql, jk, kk = full_pattern(hs, s, t)
    if kind == "uniform":
        c = rng.uniform(-1, 1, size=ql.size)
    elif kind == "nondegenerate":
        c = rng.uniform(delta, 1, size=ql.size) * rng.choice([-1.0, 1.0], size=ql.size)
    elif kind == "signs":
        c = rng.choice([-1.0, 1.0], size=ql.size)
    else:
        raise ValueError(f"unknown coefficient kind {kind!r}")
    if density < 1:
        keep = rng.uniform(size=ql.size) < density
        ql, jk, kk, c = ql[keep], jk[keep], kk[keep], c[keep]
    return HaarShift(hs, s, t, ql, jk, kk, c)


def haar_multiplier(hs: HaarSystem, coeffs=1.0) -> HaarShift:
    """Complexity (0, 0) shift with c^Q_{Q,Q} = coeffs (scalar or per-row array)."""
    ql, jk, kk = full_pattern(hs, 0, 0)
    c = np.broadcast_to(np.asarray(coeffs, dtype=float), ql.shape).copy()
    return HaarShift(hs, 0, 0, ql, jk, kk, c)


def l1_normalize(T: HaarShift) -> HaarShift:
    """Rescale c^Q_{J,K} by sqrt(m(J) m(K)) / mu(Q) (at most 1 since m <= mu).

    Each term then has kernel at most ||h_J||_inf sqrt(m(J)) ||h_K||_inf sqrt(m(K)) / mu(Q),
    so the result is L1 normalized on any measure with constant
    2^(n(s+t)) xi(hs, 0, 0)^2.
    """
    hs, tree = T.haar, T.tree
    mj = np.array([hs.m[lq + T.s][k] for lq, k in zip(T.q_level, T.j_key)])
    mk = np.array([hs.m[lq + T.t][k] for lq, k in zip(T.q_level, T.k_key)])
    muq = np.array([tree.mu[lq][k] for lq, k in zip(T.q_level, T.q_key())])
    scale = np.minimum(np.sqrt(mj * mk) / muq, 1.0) if T.c.size else np.zeros(0)
    return HaarShift(hs, T.s, T.t, T.q_level, T.j_key, T.k_key, T.c * scale)


def zero_shift(hs: HaarSystem, s: int = 0, t: int = 0) -> HaarShift:
    return HaarShift(hs, s, t, [], [], [], [])


def apply_shift(T: HaarShift, f) -> np.ndarray:
    """sum_Q sum_{J,K} c^Q_{J,K} <f, h_J> h_K, componentwise for vector f."""
    tree = T.tree
    f = _check_leaf_function(tree, f)
    H = T.haar.dense()
    w = tree.leaf_masses if f.ndim == 1 else tree.leaf_masses[:, None]
    coef = H @ (f * w)
    return H.T @ (T.coefficient_matrix() @ coef)


def kernel_sup(T: HaarShift) -> dict:
    """||K_Q||_inf for every Q carrying coefficients, as {(level, key): value}."""
    tree = T.tree
    hs = T.haar
    out = {}
    qk = T.q_key()
    order = np.lexsort((qk, T.q_level))
    ql, qk = T.q_level[order], qk[order]
    jk, kk, c = T.j_key[order], T.k_key[order], T.c[order]
    bounds = np.flatnonzero(np.diff(ql) | np.diff(qk)) + 1
    for seg in np.split(np.arange(ql.size), bounds):
        if seg.size == 0:
            continue
        lq, q = int(ql[seg[0]]), int(qk[seg[0]])
        # leaves of Q at the resolution of the deepest involved Haar level
        depth = max(T.s, T.t) + 1
        res = lq + depth
        width = 2 ** (tree.n * depth)
        Jl, Kl = lq + T.s, lq + T.t
        hj = np.zeros((2 ** (tree.n * T.s), width))
        hk = np.zeros((2 ** (tree.n * T.t), width))
        for i in range(hj.shape[0]):
            vals = hs.alpha[Jl][q * hj.shape[0] + i]
            span = 2 ** (tree.n * (res - Jl - 1))
            hj[i, i * tree.nchild * span:(i + 1) * tree.nchild * span] = np.repeat(vals, span)
        for i in range(hk.shape[0]):
            vals = hs.alpha[Kl][q * hk.shape[0] + i]
            span = 2 ** (tree.n * (res - Kl - 1))
            hk[i, i * tree.nchild * span:(i + 1) * tree.nchild * span] = np.repeat(vals, span)
        C = np.zeros((hk.shape[0], hj.shape[0]))
        np.add.at(C, (kk[seg] - q * hk.shape[0], jk[seg] - q * hj.shape[0]), c[seg])
        K = hk.T @ C @ hj  # K[x, y]
        out[(lq, q)] = float(np.max(np.abs(K)))
    return out


@dataclass
class L1Verdict:
    verdict: bool
    worst_cube: CubeId | None
    achieved: float


def is_L1_normalized(T: HaarShift, c: float, rtol: float = 1e-12) -> L1Verdict:
    """Checks ||K_Q||_inf <= c / mu(Q) for every Q; ``achieved`` = max mu(Q)||K_Q||_inf.

    ``rtol`` absorbs rounding in products of Haar values (h_Q^2 = 1/|Q| is
    not exact in floating point on odd levels).
    """
    tree = T.tree
    best, worst = 0.0, None
    for (lq, q), val in kernel_sup(T).items():
        r = val * float(tree.mu[lq][q])
        if r > best:
            best, worst = r, tree.cube(lq, q)
    return L1Verdict(bool(best <= c * (1 + rtol)), worst, best)


def t_separated_split(T: HaarShift) -> list:
    """t+1 shifts, the k-th carrying the Q with level = k mod (t+1)."""
    return [T.restrict(T.q_level % (T.t + 1) == k) for k in range(T.t + 1)]


def shifts_sum_equal(parts: list, T: HaarShift) -> bool:
    """Coefficient-level equality of sum(parts) and T."""
    def table(S):
        d = {}
        for key in zip(S.q_level.tolist(), S.j_key.tolist(), S.k_key.tolist(), S.c.tolist()):
            d[key[:3]] = d.get(key[:3], 0.0) + key[3]
        return d
    total = {}
    for P in parts:
        for k, v in table(P).items():
            total[k] = total.get(k, 0.0) + v
    ref = table(T)
    clean = lambda d: {k: v for k, v in d.items() if v != 0.0}  # noqa: E731
    return clean(total) == clean(ref)


# martingale multipliers ------------------------------------------------------

@dataclass
class MartingaleMultiplier:
    tree: MeasuredTree
    sigma: list  # per level 0..L-1, arrays of +-1

    def __post_init__(self):
        for level, s in enumerate(self.sigma):
            s = np.asarray(s, dtype=float)
            if s.shape != (self.tree.count(level),) or not np.all(np.abs(s) == 1):
                raise ValueError("sigma must be +-1 on every non-leaf cube")
            self.sigma[level] = s

    @classmethod
    def constant(cls, tree: MeasuredTree, value: float = 1.0) -> "MartingaleMultiplier":
        return cls(tree, [np.full(tree.count(lv), float(value)) for lv in range(tree.L)])

    @classmethod
    def random(cls, tree: MeasuredTree, rng: np.random.Generator) -> "MartingaleMultiplier":
        return cls(tree, [rng.choice([-1.0, 1.0], size=tree.count(lv)) for lv in range(tree.L)])

    def matrix(self) -> np.ndarray:
        tree = self.tree
        return apply_multiplier(self, np.eye(tree.nleaves))


def martingale_difference(tree: MeasuredTree, f, level: int, avgs=None) -> np.ndarray:
    """Leafwise sum over Q at ``level`` of Delta_Q f."""
    avgs = cube_averages(tree, f) if avgs is None else avgs
    return expand(tree, level + 1, avgs[level + 1]) - expand(tree, level, avgs[level])


def apply_multiplier(sigma: MartingaleMultiplier, f) -> np.ndarray:
    """sum_Q sigma_Q Delta_Q f with Delta_Q f = sum_{P in ch(Q)} 1_P(<f>_P - <f>_Q)."""
    tree = sigma.tree
    f = _check_leaf_function(tree, f)
    avgs = cube_averages(tree, f)
    out = np.zeros_like(f)
    for level in range(tree.L):
        s = expand(tree, level, sigma.sigma[level])
        if f.ndim > 1:
            s = s[:, None]
        out = out + s * martingale_difference(tree, f, level, avgs)
    return out


def expectation_matrix(tree: MeasuredTree, Q: CubeId) -> np.ndarray:
    """E_Q f = 1_Q <f>_Q as a leaf matrix."""
    a, b = tree.leaf_range(Q)
    E = np.zeros((tree.nleaves, tree.nleaves))
    E[a:b, a:b] = tree.leaf_masses[a:b][None, :] / tree.measure(Q)
    return E


# Calderon-Zygmund decomposition ---------------------------------------------

@dataclass
class CZDecomposition:
    lam: float
    stopping_cubes: list
    g: np.ndarray
    b: np.ndarray
    b_parts: list
    parents: list
    exact: bool = False
    report: dict = field(default_factory=dict)


def _frac_array(x) -> np.ndarray:
    return np.array([Fraction(float(v)) for v in np.asarray(x).reshape(-1)], dtype=object)


def cz_decompose(tree: MeasuredTree, f, lam: float, exact: bool = False) -> CZDecomposition:
    """Stopping cubes are the maximal Q with <|f|>_Q > lam.

    b_k = f 1_{Q_k} - <f 1_{Q_k}>_{parent} 1_{parent}.  When the root itself
    stops it serves as its own parent.  ``exact=True`` carries out every
    operation in rational arithmetic on the (dyadic rational) float inputs.
    """
    if not lam > 0:
        raise ValueError("lambda must be positive")
    f = _check_leaf_function(tree, f)
    if f.ndim != 1:
        raise ValueError("cz_decompose needs a scalar function")
    if exact:
        fv = _frac_array(f)
        mu = _frac_array(tree.leaf_masses)
        lam_v = Fraction(float(lam))
        zero = Fraction(0)
    else:
        fv, mu, lam_v, zero = f, tree.leaf_masses, float(lam), 0.0
    absf = np.array([abs(v) for v in fv], dtype=object) if exact else np.abs(fv)
    # partial sums of |f| mu and mu per cube, bottom-up
    fs = [None] * (tree.L + 1)
    ms = [None] * (tree.L + 1)
    fs[tree.L] = absf * mu
    ms[tree.L] = mu
    for level in range(tree.L - 1, -1, -1):
        fs[level] = fs[level + 1].reshape(-1, tree.nchild).sum(axis=1)
        ms[level] = ms[level + 1].reshape(-1, tree.nchild).sum(axis=1)
    covered = np.zeros(tree.nleaves, dtype=bool)
    stops = []
    for level in range(tree.L + 1):
        span = 2 ** (tree.n * (tree.L - level))
        for k in range(tree.count(level)):
            if covered[k * span]:
                continue
            if fs[level][k] > lam_v * ms[level][k]:
                stops.append((level, k))
                covered[k * span:(k + 1) * span] = True
    b = np.array([zero] * tree.nleaves, dtype=object) if exact else np.zeros(tree.nleaves)
    parts, parents = [], []
    for level, k in stops:
        a0, a1 = k * 2 ** (tree.n * (tree.L - level)), (k + 1) * 2 ** (tree.n * (tree.L - level))
        pl = level - 1 if level > 0 else 0
        pk = k >> tree.n if level > 0 else 0
        p0, p1 = pk * 2 ** (tree.n * (tree.L - pl)), (pk + 1) * 2 ** (tree.n * (tree.L - pl))
        mass_f = (fv[a0:a1] * mu[a0:a1]).sum()
        avg = mass_f / ms[pl][pk]
        bk = np.array([zero] * tree.nleaves, dtype=object) if exact else np.zeros(tree.nleaves)
        bk[a0:a1] = fv[a0:a1]
        bk[p0:p1] = bk[p0:p1] - avg
        b = b + bk
        parts.append(bk)
        parents.append(tree.cube(pl, pk))
    g = fv - b
    cz = CZDecomposition(float(lam), [tree.cube(lv, k) for lv, k in stops], g, b, parts, parents, exact)
    cz.report = cz_report(tree, f, cz)
    return cz


def bmo_norm(tree: MeasuredTree, g) -> float:
    """max_Q (1/mu(Q)) int_Q |g - <g>_parent| (the root uses its own average)."""
    g = np.asarray(g, dtype=float)
    avgs = cube_averages(tree, g)
    best = 0.0
    for level in range(tree.L + 1):
        pa = avgs[level - 1] if level > 0 else avgs[0]
        ref = expand(tree, level - 1 if level > 0 else 0, pa)
        dev = np.abs(g - ref) * tree.leaf_masses
        sums = dev.reshape(tree.count(level), -1).sum(axis=1)
        best = max(best, float(np.max(sums / tree.mu[level])))
    return best


def cz_report(tree: MeasuredTree, f: np.ndarray, cz: CZDecomposition) -> dict:
    g = np.array([float(v) for v in cz.g]) if cz.exact else cz.g
    mu = tree.leaf_masses
    l1 = float(np.sum(np.abs(f) * mu))
    out = {"n_stopping": len(cz.stopping_cubes)}
    for p in (2, 4):
        out[f"g_p{p}"] = float(np.sum(np.abs(g) ** p * mu) / (cz.lam ** (p - 1) * l1)) if l1 > 0 else 0.0
    out["g_bmo"] = bmo_norm(tree, g) / cz.lam
    bl1 = sum(float(np.sum(np.abs(np.array([float(v) for v in bk])) * mu)) for bk in cz.b_parts)
    out["b_l1_ratio"] = bl1 / l1 if l1 > 0 else 0.0
    return out


def check_cz_invariants(tree: MeasuredTree, f, cz: CZDecomposition) -> list:
    """Names of violated invariants (empty when all hold); exact in rational mode."""
    bad = []
    if cz.exact:
        fv = _frac_array(f)
        mu = _frac_array(tree.leaf_masses)
        lam = Fraction(cz.lam)
    else:
        fv, mu, lam = np.asarray(f, dtype=float), tree.leaf_masses, cz.lam
    scale = max(float(np.max(np.abs(np.asarray(f, dtype=float)))), 1.0)
    tol = 0 if cz.exact else 1e-12 * scale
    if not all(abs(x - y) <= tol for x, y in zip(fv, cz.g + cz.b)):
        bad.append("f = g + b")
    for Q, P, bk in zip(cz.stopping_cubes, cz.parents, cz.b_parts):
        p0, p1 = tree.leaf_range(P)
        if abs((bk[p0:p1] * mu[p0:p1]).sum()) > tol * mu[p0:p1].sum():
            bad.append(f"mean zero of b_k on parent of {Q}")
        if any(v != 0 for v in np.concatenate([bk[:p0], bk[p1:]])):
            bad.append(f"support of b_k for {Q}")
        a0, a1 = tree.leaf_range(Q)
        absf = np.array([abs(v) for v in fv[a0:a1]], dtype=object) if cz.exact else np.abs(fv[a0:a1])
        if not (absf * mu[a0:a1]).sum() > lam * mu[a0:a1].sum():
            bad.append(f"<|f|> > lambda on {Q}")
    # disjointness
    seen = np.zeros(tree.nleaves, dtype=bool)
    for Q in cz.stopping_cubes:
        a0, a1 = tree.leaf_range(Q)
        if seen[a0:a1].any():
            bad.append("stopping cubes not disjoint")
        seen[a0:a1] = True
    return bad


# weak-type experiments -------------------------------------------------------

def random_test_function(tree: MeasuredTree, rng: np.random.Generator, spikes: int = 2,
                         smooth_level: int = 2, spike_scale: float = 10.0) -> np.ndarray:
    """Leaf spikes (value ~ M / mu(leaf)) plus a coarse piecewise-constant part."""
    f = np.zeros(tree.nleaves)
    level = min(smooth_level, tree.L)
    f += expand(tree, level, rng.normal(size=tree.count(level)))
    leaves = rng.choice(tree.nleaves, size=min(spikes, tree.nleaves), replace=False)
    f[leaves] += spike_scale * rng.choice([-1.0, 1.0], size=leaves.size) / tree.leaf_masses[leaves] * float(tree.mu[0][0]) / tree.nleaves
    return f


def weak_type_constant(tree: MeasuredTree, f: np.ndarray, Tf: np.ndarray, grid: int = 400) -> dict:
    mu = tree.leaf_masses
    l1 = float(np.sum(np.abs(f) * mu))
    a = np.abs(Tf)
    if l1 == 0 or not np.any(a > 0):
        return {"grid": 0.0, "exact": 0.0}
    lo = 1e-3 * l1 / float(tree.mu[0][0])
    hi = 1e3 * float(np.max(np.abs(f)))
    lams = np.geomspace(lo, hi, grid)
    dist = np.array([mu[a > lam].sum() for lam in lams])
    on_grid = float(np.max(lams * dist) / l1)
    # sup over all lambda: approached just below each attained value v of |Tf|
    vals = np.unique(a[a > 0])
    exact = max(float(v * mu[a >= v].sum()) for v in vals) / l1
    return {"grid": on_grid, "exact": exact}


def weak_type_experiment(T, trials: int, rng: np.random.Generator, grid: int = 400, **fkw) -> dict:
    """Empirical weak (1,1) constant: max over trials of lambda mu{|Tf| > lambda} / ||f||_1."""
    if trials < 1:
        raise ValueError("trials must be >= 1")
    tree = T.tree
    M = T.matrix()
    best = {"grid": 0.0, "exact": 0.0}
    for _ in range(trials):
        f = random_test_function(tree, rng, **fkw)
        r = weak_type_constant(tree, f, M @ f, grid)
        best = {k: max(best[k], r[k]) for k in best}
    return best
