"""Generalized Haar systems: one mean-zero, L2-normalized, child-constant
function per non-leaf cube.

``m(Q)`` is stored as ``||h_Q||_1 ** 2``.  For the two-valued systems built
here this is ``4 mu(G+) mu(G-) / mu(Q)``; the product ``mu(G+) mu(G-) / mu(Q)``
(the classical one-dimensional normalization) is kept as ``m_product``.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .dyadic import CubeId, MeasuredTree

DEGENERACY = 1e-14
OUTWARD = 1.0 + 4 * np.finfo(float).eps


@dataclass(frozen=True)
class HaarFunction:
    cube: CubeId
    child_coeffs: np.ndarray  # alpha_R for R in children order


@dataclass
class BalancedReport:
    xi00: float
    xi10: float
    xi01: float
    ratio_max: float
    ratio_min: float
    is_standard: bool
    is_balanced: bool
    min_child_c1: float = float("nan")
    min_child_c2: float = float("nan")

    def to_json(self) -> dict:
        return dict(self.__dict__)


class HaarSystem:
    """Per-level arrays in Morton order: ``alpha[l]`` has shape (2^(nl), 2^n)."""

    def __init__(self, tree: MeasuredTree, alpha: list, m_product: list):
        self.tree = tree
        # directed rounding: magnitudes rounded outward and m clamped to mu(Q),
        # so 1 <= ||h||_inf sqrt(m) and m <= mu(Q) hold in floating point
        # where they are tight (even splits)
        self.alpha = [np.asarray(a, dtype=float) * OUTWARD for a in alpha]
        alpha = self.alpha
        self.m_product = m_product
        self.nonzero, self.l1, self.linf, self.m = [], [], [], []
        for level, a in enumerate(alpha):
            mp = m_product[level]
            # ||h||_1^2 of a two-valued function equals 4 mu+ (mu- / mu)
            m = np.minimum(4.0 * mp, tree.mu[level])
            self.m.append(m)
            self.l1.append(np.sqrt(m))
            self.linf.append(np.max(np.abs(a), axis=1))
            self.nonzero.append(np.any(a != 0, axis=1))
        self._dense = None

    def l1_direct(self, level: int) -> np.ndarray:
        """sum |alpha_R| mu(R), computed from the coefficients."""
        kids = self.tree.mu[level + 1].reshape(-1, self.tree.nchild)
        return np.sum(np.abs(self.alpha[level]) * kids, axis=1)

    @property
    def levels(self) -> int:
        return len(self.alpha)

    def function(self, Q: CubeId) -> HaarFunction:
        return HaarFunction(Q, self.alpha[Q.level][self.tree.key(Q)].copy())

    def m_of(self, Q: CubeId) -> float:
        return float(self.m[Q.level][self.tree.key(Q)])

    def leaf_values(self, level: int, key: int) -> np.ndarray:
        """Values of h_Q on the leaves of Q (Morton order)."""
        span = 2 ** (self.tree.n * (self.tree.L - level - 1))
        return np.repeat(self.alpha[level][key], span)

    def dense(self) -> np.ndarray:
        """Matrix H with one row per non-leaf cube (level-major, Morton) over all leaves."""
        if self._dense is None:
            t = self.tree
            rows = []
            for level in range(self.levels):
                span = 2 ** (t.n * (t.L - level - 1))
                vals = np.repeat(self.alpha[level], span, axis=1)  # (count, leaves of Q)
                block = np.zeros((t.count(level), t.nleaves))
                width = vals.shape[1]
                for k in range(t.count(level)):
                    block[k, k * width:(k + 1) * width] = vals[k]
                rows.append(block)
            self._dense = np.vstack(rows)
        return self._dense

    def row_offset(self, level: int) -> int:
        return sum(self.tree.count(lv) for lv in range(level))

    def gram_error(self) -> float:
        """max |<h_Q, h_R> - delta_QR| over nonzero functions."""
        H = self.dense()
        mask = np.concatenate(self.nonzero)
        Hn = H[mask]
        G = (Hn * self.tree.leaf_masses) @ Hn.T
        return float(np.max(np.abs(G - np.eye(G.shape[0])))) if G.size else 0.0

    def to_json(self) -> list:
        out = []
        for level, a in enumerate(self.alpha):
            for k in range(a.shape[0]):
                Q = self.tree.cube(level, k)
                out.append({"cube": [Q.level, list(Q.index)], "alphas": a[k].tolist(), "m": float(self.m[level][k])})
        return out


def _degenerate(tree: MeasuredTree, cplus: np.ndarray, cminus: np.ndarray) -> np.ndarray:
    # c has units mu^{-1/2}; compare c sqrt(mu(root)) with 1/eps so the test
    # is invariant under rescaling the measure
    scale = np.sqrt(float(tree.mu[0][0]))
    return (cplus * scale > 1.0 / DEGENERACY) | (cminus * scale > 1.0 / DEGENERACY)


def build_haar_1d(tree: MeasuredTree) -> HaarSystem:
    """h_I = sqrt(m)(1_{I+}/mu(I+) - 1_{I-}/mu(I-)), m = mu(I+)mu(I-)/mu(I)."""
    if tree.n != 1:
        raise ValueError("build_haar_1d needs n = 1")
    alpha, mprod = [], []
    for level in range(tree.L):
        kids = tree.mu[level + 1].reshape(-1, 2)
        left, right = kids[:, 0], kids[:, 1]
        m = right * (left / tree.mu[level])
        a = np.stack([-np.sqrt(m) / left, np.sqrt(m) / right], axis=1)
        bad = _degenerate(tree, a[:, 1], -a[:, 0])
        a[bad] = 0.0
        alpha.append(a)
        mprod.append(np.where(bad, 0.0, m))
    return HaarSystem(tree, alpha, mprod)


def default_split(tree: MeasuredTree, coord: int = 0) -> np.ndarray:
    """Boolean mask over children: True for G+ (upper half along ``coord``)."""
    j = np.arange(tree.nchild)
    return ((j >> (tree.n - 1 - coord)) & 1).astype(bool)


def build_haar_nd(tree: MeasuredTree, split_spec=None) -> HaarSystem:
    """Two-valued system h_Q = c+ 1_{G+} - c- 1_{G-}.

    ``split_spec`` is None (half-space split along the first coordinate), an
    integer coordinate, a boolean mask over children used for every cube, or
    a callable ``(level, key) -> mask``.
    """
    if split_spec is None or isinstance(split_spec, (int, np.integer)):
        coord = 0 if split_spec is None else int(split_spec)
        if not 0 <= coord < tree.n:
            raise ValueError(f"split coordinate {coord} outside [0, {tree.n})")
        fixed = default_split(tree, coord)
        split = lambda level, key: fixed  # noqa: E731
    elif callable(split_spec):
        split = split_spec
    else:
        fixed = np.asarray(split_spec, dtype=bool)
        split = lambda level, key: fixed  # noqa: E731
    alpha, mprod = [], []
    for level in range(tree.L):
        kids = tree.mu[level + 1].reshape(-1, tree.nchild)
        a = np.zeros_like(kids)
        mp = np.zeros(kids.shape[0])
        for k in range(kids.shape[0]):
            g = np.asarray(split(level, k), dtype=bool)
            if g.shape != (tree.nchild,) or g.all() or not g.any():
                raise ValueError(f"split at cube {tree.cube(level, k)!r} must be a bipartition with both groups nonempty")
            mplus = kids[k, g].sum()
            mminus = kids[k, ~g].sum()
            muq = tree.mu[level][k]
            cp = np.sqrt(mminus / (mplus * muq))
            cm = np.sqrt(mplus / (mminus * muq))
            if _degenerate(tree, np.array([cp]), np.array([cm]))[0]:
                continue
            a[k, g] = cp
            a[k, ~g] = -cm
            mp[k] = mplus * (mminus / muq)
        alpha.append(a)
        mprod.append(mp)
    return HaarSystem(tree, alpha, mprod)


def build_haar(tree: MeasuredTree, split_spec=None) -> HaarSystem:
    if tree.n == 1 and split_spec is None:
        return build_haar_1d(tree)
    return build_haar_nd(tree, split_spec)


def _block_max(values: np.ndarray, mask: np.ndarray, groups: int) -> np.ndarray:
    v = np.where(mask, values, -np.inf).reshape(groups, -1)
    return v.max(axis=1)


def xi(hs: HaarSystem, s: int, t: int) -> float:
    """max over Q, J in D_s(Q), K in D_t(Q) of ||h_J||_inf ||h_K||_1 (nonzero h only)."""
    if s < 0 or t < 0:
        raise IndexError("s and t must be nonnegative")
    if max(s, t) > hs.levels - 1:
        raise IndexError(f"range empty: max(s, t) = {max(s, t)} exceeds depth {hs.levels - 1}")
    best = -np.inf
    tree = hs.tree
    for level in range(hs.levels - max(s, t)):
        g = tree.count(level)
        a = _block_max(hs.linf[level + s], hs.nonzero[level + s], g)
        b = _block_max(hs.l1[level + t], hs.nonzero[level + t], g)
        prod = np.where(np.isfinite(a) & np.isfinite(b), a * b, -np.inf)
        best = max(best, float(prod.max()))
    return best if np.isfinite(best) else 0.0


def parent_ratios(hs: HaarSystem) -> np.ndarray:
    """m(Q)/m(parent) over all eligible Q (both functions nonzero)."""
    out = []
    for level in range(1, hs.levels):
        pm = np.repeat(hs.m[level - 1], hs.tree.nchild)
        ok = hs.nonzero[level] & np.repeat(hs.nonzero[level - 1], hs.tree.nchild)
        out.append(hs.m[level][ok] / pm[ok])
    return np.concatenate(out) if out else np.zeros(0)


def min_child_constants(hs: HaarSystem) -> tuple:
    """Extremes of m(Q) / min{mu(R): R in ch(Q)} over nonzero Q."""
    vals = []
    for level in range(hs.levels):
        kids = hs.tree.mu[level + 1].reshape(-1, hs.tree.nchild).min(axis=1)
        ok = hs.nonzero[level]
        vals.append(hs.m[level][ok] / kids[ok])
    v = np.concatenate(vals)
    return float(v.min()), float(v.max())


def check_balanced(hs: HaarSystem, B: float = 2.0) -> BalancedReport:
    r = parent_ratios(hs)
    rmax = float(r.max()) if r.size else 1.0
    rmin = float(r.min()) if r.size else 1.0
    x00 = xi(hs, 0, 0)
    x10 = xi(hs, 1, 0) if hs.levels >= 2 else float("nan")
    x01 = xi(hs, 0, 1) if hs.levels >= 2 else float("nan")
    standard = x00 <= B
    balanced = standard and rmax <= B and rmin >= 1.0 / B
    c1, c2 = min_child_constants(hs)
    return BalancedReport(x00, x10, x01, rmax, rmin, bool(standard), bool(balanced), c1, c2)
