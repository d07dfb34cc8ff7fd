"""Sparse families, sparse forms and the stopping-time constructions that
dominate Haar shifts and martingale multipliers by convex body averages.

Cubes are handled as ``(level, key)`` pairs with Morton keys.  A construction
returns the family together with a certificate: for every leaf x of Q0 the
vector Tf(x) is tested by linear programming for membership in

    C * ( sum_{Q in S, x in Q} <<f>>_Q
          + sum_{J, K in S, dist(J, K) <= N + 2, x in K} <<f>>_J sqrt(m(J) m(K)) / mu(K) )

(the second sum only in modified mode).  The constant C of the certificate is
not searched for: it is assembled from the stopping constant by following the
decomposition of Tf(x) used in the construction term by term, so a failing
leaf points at a flaw in the construction rather than at a small C.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .convexbody import FacetGauge, MEMBER_TOL, Zonotope, gauge, john_ellipsoid
from .dyadic import CubeId, MeasuredTree, key_distance
from .haar import HaarSystem
from .shifts import HaarShift, MartingaleMultiplier, apply_multiplier, apply_shift, cube_averages, expand

STOP_RTOL = 1e-9


# families --------------------------------------------------------------------

@dataclass
class SparseFamily:
    tree: MeasuredTree
    cubes: frozenset  # of (level, key)
    eta: float = float("nan")  # claimed sparseness parameter

    def __contains__(self, cube) -> bool:
        return tuple(cube) in self.cubes

    def __len__(self) -> int:
        return len(self.cubes)

    def masks(self) -> list:
        out = [np.zeros(self.tree.count(lv), dtype=bool) for lv in range(self.tree.L + 1)]
        for lv, k in self.cubes:
            out[lv][k] = True
        return out

    def ids(self) -> list:
        return [self.tree.cube(lv, k) for lv, k in sorted(self.cubes)]

    def to_json(self) -> dict:
        return {"cubes": [[Q.level, list(Q.index)] for Q in self.ids()], "eta": self.eta}


def family(tree: MeasuredTree, cubes, eta: float = float("nan")) -> SparseFamily:
    """Family from CubeIds or (level, key) pairs."""
    keys = set()
    for Q in cubes:
        if isinstance(Q, CubeId):
            keys.add((Q.level, tree.key(Q)))
        else:
            keys.add((int(Q[0]), int(Q[1])))
    return SparseFamily(tree, frozenset(keys), eta)


def enlarge(S: SparseFamily, t: int) -> SparseFamily:
    """Union of D^t(Q) = descendants of order 0..t (clipped at the leaves)."""
    tree = S.tree
    out = set()
    for lv, k in S.cubes:
        for j in range(min(t, tree.L - lv) + 1):
            base = k << (tree.n * j)
            out.update((lv + j, base + i) for i in range(2 ** (tree.n * j)))
    return SparseFamily(tree, frozenset(out), S.eta)


@dataclass
class SparsenessReport:
    eta: float
    lam: float
    worst: CubeId | None

    def to_json(self) -> dict:
        w = None if self.worst is None else [self.worst.level, list(self.worst.index)]
        return {"eta": self.eta, "lambda": self.lam, "worst": w}


def verify_sparseness(S: SparseFamily) -> SparsenessReport:
    """Carleson packing constant and the matching sparseness parameter.

    lambda = max_P sum_{Q in S, Q in P} mu(Q) / mu(P), exact.  eta comes from
    the bottom-up assignment in which every Q claims eta * mu(Q) of the mass
    of Q not yet claimed by smaller members; mass inside a leaf is divisible
    (the measure has constant density on each leaf), so this succeeds exactly
    when eta <= 1 / lambda.
    """
    tree = S.tree
    if not S.cubes:
        return SparsenessReport(1.0, 0.0, None)
    masks = S.masks()
    acc = [None] * (tree.L + 1)
    acc[tree.L] = np.where(masks[tree.L], tree.mu[tree.L], 0.0)
    for lv in range(tree.L - 1, -1, -1):
        acc[lv] = np.where(masks[lv], tree.mu[lv], 0.0) + acc[lv + 1].reshape(-1, tree.nchild).sum(axis=1)
    best, worst = 0.0, None
    for lv in range(tree.L + 1):
        ratio = acc[lv] / tree.mu[lv]
        k = int(np.argmax(ratio))
        if ratio[k] > best:
            best, worst = float(ratio[k]), tree.cube(lv, k)
    return SparsenessReport(1.0 / best, best, worst)


def disjoint_sets(S: SparseFamily, eta: float) -> dict:
    """Fractional major subsets: {(level, key): per-leaf claimed mass} for a
    feasible eta (bottom-up, each cube takes free mass in leaf order)."""
    tree = S.tree
    free = tree.leaf_masses.astype(float).copy()
    out = {}
    for lv, k in sorted(S.cubes, key=lambda c: (-c[0], c[1])):
        a, b = tree.leaf_range(tree.cube(lv, k))
        need = eta * float(tree.mu[lv][k])
        take = np.zeros(b - a)
        for i in range(a, b):
            if need <= 0:
                break
            got = min(free[i], need)
            take[i - a] = got
            free[i] -= got
            need -= got
        if need > 1e-12 * float(tree.mu[lv][k]):
            raise ValueError(f"eta = {eta} is not attainable at cube {tree.cube(lv, k)!r}")
        out[(lv, k)] = take
    return out


# sparse forms ----------------------------------------------------------------

def _vec(f) -> np.ndarray:
    f = np.asarray(f, dtype=float)
    return f[:, None] if f.ndim == 1 else f


def _pair_average(tree: MeasuredTree, f, g, J, K) -> float:
    """avg_J avg_K |f(x) . g(y)| dmu(x) dmu(y) for J, K given as (level, key)."""
    aj, bj = tree.leaf_range(tree.cube(*J))
    ak, bk = tree.leaf_range(tree.cube(*K))
    wj = tree.leaf_masses[aj:bj] / tree.mu[J[0]][J[1]]
    wk = tree.leaf_masses[ak:bk] / tree.mu[K[0]][K[1]]
    return float(wj @ np.abs(f[aj:bj] @ g[ak:bk].T) @ wk)


def sparse_form(S: SparseFamily, f, g) -> float:
    f, g = _vec(f), _vec(g)
    if f.shape != g.shape:
        raise ValueError("dimension mismatch")
    tree = S.tree
    return float(sum(_pair_average(tree, f, g, Q, Q) * tree.mu[Q[0]][Q[1]] for Q in sorted(S.cubes)))


def m_extended(hs: HaarSystem, level: int, key: int) -> float:
    """m(Q) for non-leaf Q; for a leaf, mu(Q), the value of the half-space
    Haar function of the (uniform) measure inside the leaf."""
    if level < hs.levels:
        return float(hs.m[level][key])
    return float(hs.tree.mu[level][key])


def modified_pairs(S: SparseFamily, N: int) -> list:
    """Sorted pairs (J, K) of members with dist(J, K) <= N + 2."""
    tree = S.tree
    out = set()
    R = N + 2
    for K in S.cubes:
        lk, kk = K
        for a in range(min(R, lk) + 1):
            la, ka = lk - a, kk >> (tree.n * a)
            for b in range(min(R - a, tree.L - la) + 1):
                base = ka << (tree.n * b)
                for i in range(2 ** (tree.n * b)):
                    J = (la + b, base + i)
                    if J in S.cubes and key_distance(tree.n, J[0], J[1], lk, kk) <= R:
                        out.add((J, K))
    return sorted(out)


def modified_sparse_form(S: SparseFamily, N: int, hs: HaarSystem, f, g) -> float:
    f, g = _vec(f), _vec(g)
    if f.shape != g.shape:
        raise ValueError("dimension mismatch")
    total = 0.0
    for J, K in modified_pairs(S, N):
        w = np.sqrt(m_extended(hs, *J) * m_extended(hs, *K))
        if w:
            total += _pair_average(S.tree, f, g, J, K) * w
    return float(total)


def sparse_operator_support(S: SparseFamily, f, g) -> np.ndarray:
    """Leafwise right endpoint of (L_S f)(y) . g(y) = sum_{Q in S, y in Q} <|f . g(y)|>_Q."""
    f, g = _vec(f), _vec(g)
    tree = S.tree
    out = np.zeros(tree.nleaves)
    for lv, k in sorted(S.cubes):
        a, b = tree.leaf_range(tree.cube(lv, k))
        w = tree.leaf_masses[a:b] / tree.mu[lv][k]
        out[a:b] += np.abs(g[a:b] @ f[a:b].T) @ w
    return out


def pointwise_form_check(S: SparseFamily, f, g) -> tuple:
    """(ok, lhs, rhs) for int |L_S f . g| dmu <= A_S(f, g)."""
    lhs = float(S.tree.leaf_masses @ sparse_operator_support(S, f, g))
    rhs = sparse_form(S, f, g)
    return lhs <= rhs + 1e-9 * max(1.0, abs(rhs)), lhs, rhs


# certificates ----------------------------------------------------------------

@dataclass
class DominationCertificate:
    mode: str  # "plain" or "modified"
    N: int
    C: float
    C_stop: float
    family: SparseFamily
    verdict: np.ndarray  # per leaf of Q0 (Morton order within Q0)
    needed: np.ndarray  # smallest constant admitting Tf(x), per leaf
    residual: np.ndarray
    q0: tuple = (0, 0)
    generations: list = field(default_factory=list)  # (level, key, stopped measure fraction)
    decomposition_error: float = 0.0
    pairs: list = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return bool(np.all(self.verdict))

    @property
    def leaves_failing(self) -> int:
        return int(np.sum(~self.verdict))

    @property
    def worst_leaf(self) -> int:
        return int(np.argmax(self.needed)) if self.needed.size else -1

    @property
    def max_fraction(self) -> float:
        return max((g[2] for g in self.generations), default=0.0)

    def to_json(self) -> dict:
        rep = verify_sparseness(self.family)
        return {"mode": self.mode, "N": self.N, "C": self.C, "C_stop": self.C_stop,
                "eta": rep.eta, "lambda": rep.lam, "leaves_failing": self.leaves_failing,
                "worst_residual": float(np.max(self.residual)) if self.residual.size else 0.0,
                "worst_needed": float(np.max(self.needed)) if self.needed.size else 0.0,
                "family_size": len(self.family), "max_fraction": self.max_fraction,
                "decomposition_error": self.decomposition_error}


def body_weights(S: SparseFamily, x: int, mode: str = "plain", N: int = 0, hs: HaarSystem | None = None,
                 pairs=None) -> np.ndarray:
    """Per-leaf weights a_y with sum_terms <<f>>_term = Zonotope(a_y f(y))."""
    tree = S.tree
    a = np.zeros(tree.nleaves)
    for lv in range(tree.L + 1):
        k = tree.leaf_of(x, lv)
        if (lv, k) in S.cubes:
            lo, hi = tree.leaf_range(tree.cube(lv, k))
            a[lo:hi] += tree.leaf_masses[lo:hi] / tree.mu[lv][k]
    if mode == "modified":
        if hs is None:
            raise ValueError("modified mode needs the Haar system")
        for J, K in (modified_pairs(S, N) if pairs is None else pairs):
            if tree.leaf_of(x, K[0]) != K[1]:
                continue
            w = np.sqrt(m_extended(hs, *J) * m_extended(hs, *K)) / tree.mu[K[0]][K[1]]
            if w:
                lo, hi = tree.leaf_range(tree.cube(*J))
                a[lo:hi] += w * tree.leaf_masses[lo:hi] / tree.mu[J[0]][J[1]]
    return a


def check_domination(S: SparseFamily, f, Tf, C: float, q0=(0, 0), mode: str = "plain", N: int = 0,
                     hs: HaarSystem | None = None) -> tuple:
    """Per-leaf LP membership of Tf(x) in C * body(x) for the leaves x of q0.

    Returns (verdict, needed, residual) arrays; ``needed`` is C times the gauge.
    """
    tree = S.tree
    f, Tf = _vec(f), _vec(Tf)
    lo, hi = tree.leaf_range(tree.cube(*q0))
    pairs = modified_pairs(S, N) if mode == "modified" else None
    verdict = np.zeros(hi - lo, dtype=bool)
    needed = np.zeros(hi - lo)
    resid = np.zeros(hi - lo)
    for x in range(lo, hi):
        a = body_weights(S, x, mode, N, hs, pairs)
        res = gauge(Tf[x], Zonotope(C * a[:, None] * f, d=f.shape[1]).merged())
        verdict[x - lo] = res.member
        needed[x - lo] = C * res.gauge
        resid[x - lo] = res.residual if np.isfinite(res.residual) else np.inf
    return verdict, needed, resid


# stopping-time engine ----------------------------------------------------------

class _Engine:
    """Shared machinery of the three constructions.

    ``contrib[l]`` is the leaf function sum_{Q at level l} T_Q f; ``piece[l]``
    assigns level l to one of the t+1 separated pieces (one piece for
    martingale multipliers, where every cube is eligible for the first rule).
    """

    def __init__(self, tree, f, q0, contrib, piece, npieces, rule2: str):
        self.tree = tree
        self.f = f
        self.d = f.shape[1]
        self.q0 = q0
        self.contrib = contrib
        self.piece = piece
        self.npieces = npieces
        self.rule2 = rule2
        self.avgs = cube_averages(tree, f)
        self.scale = float(np.max(np.abs(f))) if f.size else 0.0
        self._gauges = {}
        self._john = {}

    # cached per-cube geometry
    def body(self, cube) -> Zonotope:
        lo, hi = self.tree.leaf_range(self.tree.cube(*cube))
        w = self.tree.leaf_masses[lo:hi] / self.tree.mu[cube[0]][cube[1]]
        return Zonotope(self.f[lo:hi] * w[:, None], d=self.d).merged()

    def gauge_of(self, cube) -> FacetGauge:
        if cube not in self._gauges:
            self._gauges[cube] = FacetGauge(self.body(cube))
        return self._gauges[cube]

    def john_data(self, cube) -> tuple:
        """(basis rows e_i, <|f.e_i|>_cube, eps) in the extended John basis."""
        if cube not in self._john:
            Z = self.body(cube)
            ell = john_ellipsoid(Z)
            B, _ = ell.full_basis()
            lo, hi = self.tree.leaf_range(self.tree.cube(*cube))
            w = self.tree.leaf_masses[lo:hi] / self.tree.mu[cube[0]][cube[1]]
            comp = w @ np.abs(self.f[lo:hi] @ B.T)
            self._john[cube] = (B, comp, ell.eps)
        return self._john[cube]

    def partial_sums(self, cube) -> np.ndarray:
        """cum[k, l - l', x] = sum of piece-k contributions from levels l'..l-1 on the leaves of cube."""
        lv0, _ = cube
        lo, hi = self.tree.leaf_range(self.tree.cube(*cube))
        L = self.tree.L
        cum = np.zeros((self.npieces, L - lv0 + 1, hi - lo, self.d))
        for lv in range(lv0, L):
            cum[:, lv - lv0 + 1] = cum[:, lv - lv0]
            cum[self.piece[lv], lv - lv0 + 1] += self.contrib[lv][lo:hi]
        return cum

    def stopping(self, cube, C: float) -> tuple:
        """Maximal cubes of D(cube) (strict) meeting a stopping rule, as a
        sorted list of (level, key), and a dict of their flags."""
        tree = self.tree
        lv0, k0 = cube
        n, L = tree.n, tree.L
        G = self.gauge_of(cube)
        cum = self.partial_sums(cube)
        thr = C * (1 + STOP_RTOL)
        tol = 1e-9 * max(self.scale, 1e-300)
        flagged = {}
        if self.rule2 == "components":
            B, comp, _ = self.john_data(cube)
            active = comp > 1e-12 * max(float(np.max(comp)) if comp.size else 0.0, 1e-300)
            lo, hi = tree.leaf_range(tree.cube(*cube))
            absf = np.abs(self.f[lo:hi] @ B.T)
        for lv in range(lv0 + 1, L + 1):
            width = 2 ** (n * (lv - lv0))
            keys = np.arange(k0 * width, (k0 + 1) * width)
            span = 2 ** (n * (L - lv))
            if self.rule2 == "gauge":
                f2 = G(self.avgs[lv][keys]) > thr
            else:
                w = (tree.leaf_masses[lo:hi] / np.repeat(tree.mu[lv][keys], span))
                cav = (absf * w[:, None]).reshape(width, span, -1).sum(axis=1)
                f2 = np.any((cav > (C / self.d) * comp * (1 + STOP_RTOL)) & active, axis=1)
            f1 = np.zeros(width, dtype=bool)
            pieces = range(self.npieces) if lv == L else [self.piece[lv]] if self.eligible(lv) else []
            for k in pieces:
                vals = cum[k, lv - lv0].reshape(width, span, self.d)
                if np.max(np.abs(vals - vals[:, :1]), initial=0.0) > tol:
                    raise AssertionError("partial sum is not constant on a stopping candidate")
                f1 |= G(vals[:, 0]) > thr
            for i in np.flatnonzero(f1 | f2):
                flagged[(lv, int(keys[i]))] = (bool(f1[i]), bool(f2[i]))
        selected = []
        for J in sorted(flagged):
            lv, k = J
            if not any((lv - a, k >> (n * a)) in flagged for a in range(1, lv - lv0)):
                selected.append(J)
        return selected, flagged

    def eligible(self, lv: int) -> bool:
        return lv < self.tree.L

    def build(self, C: float) -> tuple:
        """Stopping generations from q0: (list of (cube, selected, flagged), S')."""
        gens = []
        queue = [self.q0]
        members = []
        while queue:
            cube = queue.pop(0)
            members.append(cube)
            sel, flagged = self.stopping(cube, C) if cube[0] < self.tree.L else ([], {})
            gens.append((cube, sel, flagged))
            queue.extend(sel)
        return gens, members

    def fractions(self, gens) -> list:
        tree = self.tree
        out = []
        for cube, sel, _ in gens:
            frac = sum(float(tree.mu[lv][k]) for lv, k in sel) / float(tree.mu[cube[0]][cube[1]])
            out.append((cube[0], cube[1], frac))
        return out

    def tilde(self) -> np.ndarray:
        """Contributions of the cubes strictly containing q0, on the leaves of q0."""
        lo, hi = self.tree.leaf_range(self.tree.cube(*self.q0))
        out = np.zeros((hi - lo, self.d))
        for lv in range(self.q0[0]):
            out += self.contrib[lv][lo:hi]
        return out

    def auto(self, C0: float, max_doublings: int = 60) -> tuple:
        G = self.gauge_of(self.q0)
        tg = float(np.max(G(self.tilde()), initial=0.0))
        C = C0
        for _ in range(max_doublings):
            if tg <= C * (1 + STOP_RTOL):
                gens, members = self.build(C)
                if all(fr <= 0.5 for _, _, fr in self.fractions(gens)):
                    return C, gens, members
            C *= 2
        raise RuntimeError("no stopping constant up to the search limit meets the measure bound")


class _Coefficients:
    """term -> per-leaf coefficient with Tf(x) in sum_term coef(x) * body_term."""

    def __init__(self, nleaves: int, d: int):
        self.nleaves = nleaves
        self.terms = {}
        self.recon = np.zeros((nleaves, d))

    def add(self, term, lo: int, hi: int, coef):
        arr = self.terms.setdefault(term, np.zeros(self.nleaves))
        arr[lo:hi] += coef

    def max(self) -> float:
        return max((float(np.max(v)) for v in self.terms.values()), default=0.0)


def _shift_contrib(T: HaarShift, f: np.ndarray) -> list:
    out = []
    for lv in range(T.tree.L):
        part = T.restrict(T.q_level == lv)
        out.append(apply_shift(part, f) if part.c.size else np.zeros_like(f))
    return out


def _prepare(tree: MeasuredTree, f, Q0) -> tuple:
    f = _vec(f)
    if f.shape[0] != tree.nleaves:
        raise ValueError("function does not match the tree")
    q0 = (Q0.level, tree.key(Q0)) if isinstance(Q0, CubeId) else tuple(Q0) if Q0 is not None else (0, 0)
    lo, hi = tree.leaf_range(tree.cube(*q0))
    outside = np.ones(tree.nleaves, dtype=bool)
    outside[lo:hi] = False
    if np.any(f[outside] != 0):
        raise ValueError("f must be supported in Q0")
    return f, q0


def _shift_entries(T: HaarShift) -> dict:
    table = {}
    qk = T.q_key()
    for i in range(T.c.size):
        table.setdefault((int(T.q_level[i]), int(qk[i])), []).append((int(T.j_key[i]), int(T.k_key[i]), float(T.c[i])))
    return table


def _tilde_terms(eng: _Engine, co: _Coefficients):
    lo, hi = eng.tree.leaf_range(eng.tree.cube(*eng.q0))
    tv = eng.tilde()
    g = eng.gauge_of(eng.q0)(tv) if np.any(tv) else np.zeros(hi - lo)
    co.add(("P",) + eng.q0, lo, hi, g)
    co.recon[lo:hi] += tv


def _finish(eng, co, Tf, members, S, mode, N, C_stop, hs, gens, check=True) -> DominationCertificate:
    tree = eng.tree
    C = co.max()
    lo, hi = tree.leaf_range(tree.cube(*eng.q0))
    err = float(np.max(np.abs(co.recon[lo:hi] - Tf[lo:hi]), initial=0.0))
    if check:
        verdict, needed, resid = check_domination(S, eng.f, Tf, max(C, 1e-300), eng.q0, mode, N, hs)
    else:
        verdict = needed = resid = np.zeros(0)
    pairs = [term[1:] for term in co.terms if term[0] == "M"]
    return DominationCertificate(mode, N, C, C_stop, S, verdict, needed, resid, eng.q0,
                                 eng.fractions(gens), err, sorted(pairs))


def _stop_cube_of(tree: MeasuredTree, sel_set: set, x: int, lv0: int):
    for lv in range(lv0 + 1, tree.L + 1):
        c = (lv, tree.leaf_of(x, lv))
        if c in sel_set:
            return c
    return None


def _tilde_level(lv_stop: int, k: int, period: int):
    """Largest level < lv_stop congruent to k mod period (or None)."""
    lv = lv_stop - 1
    while lv >= 0 and lv % period != k:
        lv -= 1
    return lv if lv >= 0 else None


def build_sparse_balanced(T: HaarShift, f, Q0=None, C="auto", check: bool = True) -> tuple:
    """Sparse family and modified-mode certificate for a shift on a balanced pair.

    Stopping rules per generation Q': a cube J of the piece-k lattice (or a
    leaf) whose partial sum of T^{Q'} strictly above J leaves C<<f>>_{Q'}, or
    any J with <f>_J outside C<<f>>_{Q'}.  The family is enlarged by D^t.
    """
    tree, hs = T.tree, T.haar
    f, q0 = _prepare(tree, f, Q0)
    period = T.t + 1
    piece = [lv % period for lv in range(tree.L)]
    eng = _Engine(tree, f, q0, _shift_contrib(T, f), piece, period, "gauge")
    if C == "auto":
        C, gens, members = eng.auto(1.0)
    else:
        C = float(C)
        gens, members = eng.build(C)
    Sp = family(tree, members)
    S = enlarge(Sp, T.t)
    N = T.s + T.t
    Tf = apply_shift(T, f)
    entries = _shift_entries(T)
    co = _Coefficients(tree.nleaves, eng.d)
    _tilde_terms(eng, co)
    stops_of = {g[0]: set(g[1]) for g in gens}
    n = tree.n
    for cube, sel, _ in gens:
        lv0 = cube[0]
        if lv0 == tree.L:
            continue
        lo, hi = tree.leaf_range(tree.cube(*cube))
        cum = eng.partial_sums(cube)
        G = eng.gauge_of(cube)
        sel_set = set(sel)
        for x in range(lo, hi):
            Qj = _stop_cube_of(tree, sel_set, x, lv0)
            for k in range(period):
                if Qj is None:
                    v = cum[k, tree.L - lv0, x - lo]
                    co.add(("P",) + cube, x, x + 1, C)
                    co.recon[x] += v
                    continue
                lt = _tilde_level(Qj[0], k, period)
                if lt is None or lt < lv0:
                    continue  # no piece-k cube of D(Q') strictly above Q_j
                v2 = cum[k, lt - lv0, x - lo]
                if lt > lv0:
                    co.add(("P",) + cube, x, x + 1, C)
                co.recon[x] += v2
                qt = tree.leaf_of(x, lt)
                for jk, kk, c in entries.get((lt, qt), []):
                    Kl = lt + T.t
                    kchild = tree.leaf_of(x, Kl + 1)
                    if (kchild >> n) != kk:
                        continue
                    ak = hs.alpha[Kl][kk][kchild - (kk << n)]
                    if ak == 0:
                        continue
                    Jl = lt + T.s
                    for i in range(tree.nchild):
                        jp = (Jl + 1, (jk << n) + i)
                        aj = hs.alpha[Jl][jk][i]
                        if aj == 0:
                            continue
                        muJ = float(tree.mu[jp[0]][jp[1]])
                        muK = float(tree.mu[Kl + 1][kchild])
                        w = c * aj * muJ * ak * muK
                        vec = eng.avgs[jp[0]][jp[1]]
                        co.recon[x] += w * vec / muK
                        if G(vec[None, :])[0] <= C * (1 + STOP_RTOL):
                            co.add(("P",) + cube, x, x + 1, C * abs(w) / muK)
                            continue
                        # climb the stopping generations until <f>_{J'} is captured
                        gen = cube
                        while True:
                            J1 = _stop_cube_of(tree, stops_of[gen], tree.leaf_range(tree.cube(*jp))[0], gen[0])
                            if J1 is None:
                                raise AssertionError("stopped average not covered by a stopping cube")
                            if J1 == jp:
                                Sc, fac = jp, 1.0
                                break
                            if eng.gauge_of(J1)(vec[None, :])[0] <= C * (1 + STOP_RTOL):
                                Sc, fac = J1, C
                                break
                            gen = J1
                        Kp = (Kl + 1, kchild)
                        if key_distance(n, Sc[0], Sc[1], Kp[0], Kp[1]) > N + 2:
                            raise AssertionError("modified pair beyond distance N + 2")
                        mm = np.sqrt(m_extended(hs, *Sc) * m_extended(hs, *Kp))
                        coef = fac * abs(w) / mm if mm > 0 else np.inf
                        co.add(("M", Sc, Kp), x, x + 1, coef)
    cert = _finish(eng, co, Tf, members, S, "modified", N, C, hs, gens, check)
    S.eta = verify_sparseness(S).eta
    return S, cert


def build_sparse_L1(T: HaarShift, f, Q0=None, C="auto", check: bool = True) -> tuple:
    """Plain-mode certificate for an L1-normalized shift on any measure.

    The second stopping rule compares <|f.e_i|>_J with (C/d)<|f.e_i|>_{Q'}
    in the John basis of <<f>>_{Q'}; the term of the first separated ancestor
    of each stopping cube is then absorbed into <<f>>_{Q'} by the component
    lemma, with the kernel bound mu(Q)||K_Q(x, .)||_inf.
    """
    tree, hs = T.tree, T.haar
    f, q0 = _prepare(tree, f, Q0)
    period = T.t + 1
    piece = [lv % period for lv in range(tree.L)]
    eng = _Engine(tree, f, q0, _shift_contrib(T, f), piece, period, "components")
    d = eng.d
    if C == "auto":
        C, gens, members = eng.auto(float(d))
    else:
        C = float(C)
        gens, members = eng.build(C)
    S = family(tree, members)
    Tf = apply_shift(T, f)
    entries = _shift_entries(T)
    H = hs.dense()
    co = _Coefficients(tree.nleaves, d)
    _tilde_terms(eng, co)
    kernel_rows = {}

    def kernel_row_sup(lt, qt, x):
        key = (lt, qt)
        if key not in kernel_rows:
            K = np.zeros((tree.nleaves, tree.nleaves))
            for jk, kk, c in entries.get(key, []):
                rj = H[hs.row_offset(lt + T.s) + jk]
                rk = H[hs.row_offset(lt + T.t) + kk]
                K += c * np.outer(rk, rj)
            kernel_rows[key] = np.max(np.abs(K), axis=1)
        return kernel_rows[key][x]

    for cube, sel, _ in gens:
        lv0 = cube[0]
        if lv0 == tree.L:
            continue
        lo, hi = tree.leaf_range(tree.cube(*cube))
        cum = eng.partial_sums(cube)
        sel_set = set(sel)
        eps = eng.john_data(cube)[2]
        for x in range(lo, hi):
            Qj = _stop_cube_of(tree, sel_set, x, lv0)
            for k in range(period):
                if Qj is None:
                    co.add(("P",) + cube, x, x + 1, C)
                    co.recon[x] += cum[k, tree.L - lv0, x - lo]
                    continue
                lt = _tilde_level(Qj[0], k, period)
                if lt is None or lt < lv0:
                    continue
                if lt > lv0:
                    co.add(("P",) + cube, x, x + 1, C)
                co.recon[x] += cum[k, lt - lv0, x - lo]
                qt = tree.leaf_of(x, lt)
                if (lt, qt) in entries:
                    ks = kernel_row_sup(lt, qt, x) * float(tree.mu[lt][qt])
                    co.add(("P",) + cube, x, x + 1, C * np.sqrt(1 + eps) * ks)
                    co.recon[x] += eng.contrib[lt][x]
    cert = _finish(eng, co, Tf, members, S, "plain", T.s + T.t, C, hs, gens, check)
    S.eta = verify_sparseness(S).eta
    return S, cert


def build_sparse_multiplier(sigma: MartingaleMultiplier, f, Q0=None, C="auto", check: bool = True) -> tuple:
    """Plain-mode certificate for a martingale multiplier on any measure."""
    tree = sigma.tree
    f, q0 = _prepare(tree, f, Q0)
    avgs = cube_averages(tree, f)
    contrib = []
    for lv in range(tree.L):
        diff = expand(tree, lv + 1, avgs[lv + 1]) - expand(tree, lv, avgs[lv])
        contrib.append(expand(tree, lv, sigma.sigma[lv])[:, None] * diff)
    eng = _Engine(tree, f, q0, contrib, [0] * tree.L, 1, "gauge")
    if C == "auto":
        C, gens, members = eng.auto(1.0)
    else:
        C = float(C)
        gens, members = eng.build(C)
    S = family(tree, members)
    Tf = apply_multiplier(sigma, f)
    co = _Coefficients(tree.nleaves, eng.d)
    _tilde_terms(eng, co)
    for cube, sel, _ in gens:
        lv0 = cube[0]
        if lv0 == tree.L:
            continue
        lo, hi = tree.leaf_range(tree.cube(*cube))
        cum = eng.partial_sums(cube)
        sel_set = set(sel)
        for x in range(lo, hi):
            Qj = _stop_cube_of(tree, sel_set, x, lv0)
            if Qj is None:
                co.add(("P",) + cube, x, x + 1, C)
                co.recon[x] += cum[0, tree.L - lv0, x - lo]
                continue
            lp = Qj[0] - 1  # parent level
            if lp > lv0:
                co.add(("P",) + cube, x, x + 1, C)
            co.recon[x] += cum[0, lp - lv0, x - lo]
            s = sigma.sigma[lp][Qj[1] >> tree.n]
            # sigma (<f>_{Q_j} - <f>_{parent}): first in <<f>>_{Q_j}, second in C<<f>>_{Q'}
            co.add(("P",) + Qj, x, x + 1, 1.0)
            co.add(("P",) + cube, x, x + 1, C if lp > lv0 else 1.0)
            co.recon[x] += s * (avgs[Qj[0]][Qj[1]] - avgs[lp][Qj[1] >> tree.n])
    cert = _finish(eng, co, Tf, members, S, "plain", 0, C, None, gens, check)
    S.eta = verify_sparseness(S).eta
    return S, cert
