"""Finite dyadic lattices with arbitrary positive leaf masses.

Cubes are addressed publicly by ``CubeId(level, index)``.  Internally every
level is stored in Morton (Z-) order, so that the children of the cube with
Morton key ``k`` are ``2**n * k + j`` and every cube owns a contiguous range
of leaves.  For ``n == 1`` Morton order and lexicographic order coincide.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Iterator, NamedTuple

import numpy as np


class StructureError(ValueError):
    """Cubes or functions that do not belong to the same tree."""


class MeasureError(ValueError):
    """Invalid measure preset or measure file."""


class CubeId(NamedTuple):
    level: int
    index: tuple

    def __repr__(self) -> str:
        return f"CubeId({self.level}, {tuple(self.index)})"


def _interleave(index, n: int, level: int) -> int:
    # child number at generation g uses bit (level - g) of each coordinate
    key = 0
    for g in range(1, level + 1):
        shift = level - g
        j = 0
        for i in range(n):
            j = (j << 1) | ((index[i] >> shift) & 1)
        key = (key << n) | j
    return key


def _deinterleave(key: int, n: int, level: int) -> tuple:
    index = [0] * n
    for g in range(1, level + 1):
        j = (key >> (n * (level - g))) & ((1 << n) - 1)
        for i in range(n):
            bit = (j >> (n - 1 - i)) & 1
            index[i] = (index[i] << 1) | bit
    return tuple(index)


@dataclass(frozen=True)
class MeasurePreset:
    kind: str
    params: dict = field(default_factory=dict)
    seed: int = 0

    KINDS = ("lebesgue", "random-balanced", "cantor-like", "exponential-imbalanced", "explicit")

    @classmethod
    def parse(cls, text: str, seed: int = 0) -> "MeasurePreset":
        """Parse ``kind[:key=value,...]``, e.g. ``exponential-imbalanced:ratio=4``."""
        kind, _, rest = text.partition(":")
        params = {}
        if rest:
            for item in rest.split(","):
                key, eq, value = item.partition("=")
                if not eq:
                    raise MeasureError(f"malformed preset parameter {item!r}")
                params[key.strip()] = float(value)
        return cls(kind.strip(), params, seed)


class MeasuredTree:
    """Dyadic tree of depth ``L`` over a root cube in R^n.

    ``leaf_masses`` is given in Morton order.  Use :func:`build_tree` or
    :meth:`from_lex` for lexicographically ordered input.
    """

    def __init__(self, n: int, L: int, leaf_masses):
        if n < 1 or L < 1:
            raise MeasureError("need n >= 1 and L >= 1")
        masses = np.array(leaf_masses, dtype=float).reshape(-1)
        if masses.size != 2 ** (n * L):
            raise MeasureError(f"expected {2 ** (n * L)} leaf masses, got {masses.size}")
        bad = np.flatnonzero(~(masses > 0) | ~np.isfinite(masses))
        if bad.size:
            k = int(bad[0])
            raise MeasureError(f"nonpositive or non-finite mass {float(masses[k])!r} at cube {CubeId(L, _deinterleave(k, n, L))}")
        self.n = n
        self.L = L
        self.nchild = 2 ** n
        self.leaf_masses = masses
        self.leaf_masses.setflags(write=False)
        # strict bottom-up aggregation, children added in index order
        mu = [None] * (L + 1)
        mu[L] = masses
        for level in range(L - 1, -1, -1):
            kids = mu[level + 1].reshape(-1, self.nchild)
            acc = kids[:, 0].copy()
            for j in range(1, self.nchild):
                acc = acc + kids[:, j]
            acc.setflags(write=False)
            mu[level] = acc
        self.mu = mu

    # construction helpers ------------------------------------------------
    @classmethod
    def from_lex(cls, n: int, L: int, lex_masses) -> "MeasuredTree":
        lex_masses = np.asarray(lex_masses, dtype=float).reshape(-1)
        if lex_masses.size != 2 ** (n * L):
            raise MeasureError(f"expected {2 ** (n * L)} leaf masses, got {lex_masses.size}")
        bad = np.flatnonzero(~(lex_masses > 0) | ~np.isfinite(lex_masses))
        if bad.size:
            k = int(bad[0])
            index = np.unravel_index(k, (2 ** L,) * n)
            raise MeasureError(f"nonpositive or non-finite mass {float(lex_masses[k])!r} at cube {CubeId(L, tuple(int(i) for i in index))}")
        perm = lex_order(n, L)
        return cls(n, L, lex_masses[perm])

    def lex_masses(self) -> np.ndarray:
        """Leaf masses in lexicographic order of the leaf index vectors."""
        out = np.empty_like(self.leaf_masses)
        out[lex_order(self.n, self.L)] = self.leaf_masses
        return out

    # navigation ----------------------------------------------------------
    @property
    def nleaves(self) -> int:
        return 2 ** (self.n * self.L)

    @property
    def root(self) -> CubeId:
        return CubeId(0, (0,) * self.n)

    def count(self, level: int) -> int:
        return 2 ** (self.n * level)

    def key(self, Q: CubeId) -> int:
        level, index = Q
        if not 0 <= level <= self.L or len(index) != self.n:
            raise StructureError(f"{Q!r} does not belong to a tree with n={self.n}, L={self.L}")
        if any(not 0 <= i < 2 ** level for i in index):
            raise StructureError(f"index of {Q!r} out of range")
        return _interleave(index, self.n, level)

    def cube(self, level: int, key: int) -> CubeId:
        return CubeId(level, _deinterleave(key, self.n, level))

    def cubes(self, level: int | None = None) -> Iterator[CubeId]:
        levels = range(self.L + 1) if level is None else [level]
        for lv in levels:
            for k in range(self.count(lv)):
                yield self.cube(lv, k)

    def children(self, Q: CubeId) -> list:
        if Q.level >= self.L:
            raise IndexError(f"{Q!r} is a leaf")
        k = self.key(Q)
        return [self.cube(Q.level + 1, self.nchild * k + j) for j in range(self.nchild)]

    def parent(self, Q: CubeId) -> CubeId:
        return self.ancestor(Q, 1)

    def ancestor(self, Q: CubeId, k: int) -> CubeId:
        if k < 0 or Q.level < k:
            raise IndexError(f"ancestor {k} of {Q!r} does not exist")
        return CubeId(Q.level - k, tuple(i >> k for i in Q.index))

    def descendants_at(self, Q: CubeId, s: int) -> list:
        if s < 0 or Q.level + s > self.L:
            raise IndexError(f"level {Q.level + s} outside [0, {self.L}]")
        k = self.key(Q)
        span = 2 ** (self.n * s)
        return [self.cube(Q.level + s, k * span + j) for j in range(span)]

    def leaf_range(self, Q: CubeId) -> tuple:
        k = self.key(Q)
        span = 2 ** (self.n * (self.L - Q.level))
        return k * span, (k + 1) * span

    def measure(self, Q: CubeId) -> float:
        return float(self.mu[Q.level][self.key(Q)])

    def contains(self, P: CubeId, Q: CubeId) -> bool:
        """True when Q is a (not necessarily strict) subcube of P."""
        return Q.level >= P.level and self.ancestor(Q, Q.level - P.level) == P

    def leaf_of(self, leaf: int, level: int) -> int:
        """Morton key of the level-``level`` cube containing leaf number ``leaf``."""
        return leaf >> (self.n * (self.L - level))

    def same_shape(self, other: "MeasuredTree") -> bool:
        return self.n == other.n and self.L == other.L and np.array_equal(self.leaf_masses, other.leaf_masses)

    def to_json(self) -> dict:
        return {"n": self.n, "L": self.L, "leaf_masses": self.lex_masses().tolist()}

    def __repr__(self) -> str:
        return f"MeasuredTree(n={self.n}, L={self.L}, mu(root)={self.mu[0][0]!r})"


def lex_order(n: int, L: int) -> np.ndarray:
    """Permutation ``perm`` with ``morton_array = lex_array[perm]``."""
    keys = np.arange(2 ** (n * L))
    idx = np.zeros((keys.size, n), dtype=np.int64)
    for g in range(1, L + 1):
        j = (keys >> (n * (L - g))) & ((1 << n) - 1)
        for i in range(n):
            idx[:, i] = (idx[:, i] << 1) | ((j >> (n - 1 - i)) & 1)
    return np.ravel_multi_index(tuple(idx.T), (2 ** L,) * n)


def dyadic_distance(tree: MeasuredTree, J: CubeId, K: CubeId) -> int:
    """s + t where the minimal common ancestor P has J in D_s(P), K in D_t(P)."""
    kj, kk = tree.key(J), tree.key(K)
    return key_distance(tree.n, J.level, kj, K.level, kk)


def key_distance(n: int, lj: int, kj: int, lk: int, kk: int) -> int:
    a = min(lj, lk)
    kj >>= n * (lj - a)
    kk >>= n * (lk - a)
    while kj != kk:
        kj >>= n
        kk >>= n
        a -= 1
    return (lj - a) + (lk - a)


# presets -------------------------------------------------------------------

def _random_balanced(L: int, B: float, rng: np.random.Generator) -> np.ndarray:
    # Top-down: each cube I gets a target ratio r = m(I)/m(parent) drawn
    # log-uniformly from the feasible part of [1/B, B], then a split fraction
    # theta with theta(1-theta) mu(I) = r m(parent).  For B < 4 the split
    # must stay in [1 - B/4, B/4] so that both children remain feasible.
    if B < 2:
        raise MeasureError("random-balanced needs B >= 2 (B = 2 is the uniform split)")
    lo_t = max(0.0, 1.0 - B / 4.0)
    hi_t = min(1.0, B / 4.0)
    qmin = lo_t * (1 - lo_t) if B < 4 else 0.0
    frac = [np.ones(1)]  # share of the parent, per cube
    mu = np.ones(1)
    msplit = None
    for level in range(L):
        nq = mu.size
        if level == 0:
            if B >= 4:
                theta = rng.uniform(0.1, 0.9, size=1)
            else:
                theta = rng.uniform(lo_t, hi_t, size=1)
        else:
            phi = frac[-1]
            parent_m = np.repeat(msplit, 2)
            lo = np.maximum(1.0 / B, qmin / (1 - phi) if qmin > 0 else 0.0)
            hi = np.minimum(B, 1.0 / (4 * (1 - phi)))
            lo = np.minimum(lo, hi)
            u = rng.uniform(size=nq)
            r = np.exp(np.log(lo) + u * (np.log(hi) - np.log(lo)))
            q = np.clip(r * parent_m / mu, 0.0, 0.25)
            root = np.sqrt(np.maximum(0.25 - q, 0.0))
            side = rng.integers(0, 2, size=nq) * 2 - 1
            theta = 0.5 + side * root
            theta = np.clip(theta, 1e-12, 1 - 1e-12)
        msplit = theta * (1 - theta) * mu
        right = theta * mu
        left = mu - right
        mu = np.stack([left, right], axis=1).reshape(-1)
        frac.append(np.stack([1 - theta, theta], axis=1).reshape(-1))
    return mu


def _cantor_like(n: int, L: int, eps: float) -> np.ndarray:
    # digits paired two by two per coordinate: the pair keeps full weight when
    # the two binary digits agree (outer quarters) and weight eps otherwise
    lex_idx = np.indices((2 ** L,) * n).reshape(n, -1).T
    w = np.ones(lex_idx.shape[0])
    for i in range(n):
        for g in range(0, L - 1, 2):
            b1 = (lex_idx[:, i] >> (L - 1 - g)) & 1
            b2 = (lex_idx[:, i] >> (L - 2 - g)) & 1
            w = w * np.where(b1 == b2, 1.0, eps)
    return w / w.sum()


def _exponential(n: int, L: int, ratio: float, unit: float) -> np.ndarray:
    lex_idx = np.indices((2 ** L,) * n).reshape(n, -1).T
    expo = lex_idx.sum(axis=1).astype(float)
    with np.errstate(over="ignore", under="ignore"):
        w = unit * np.power(ratio, expo)
    return w


def preset_masses(n: int, L: int, preset: MeasurePreset) -> np.ndarray:
    """Leaf masses of a preset in lexicographic order."""
    kind, p = preset.kind, preset.params
    rng = np.random.default_rng(preset.seed)
    if kind == "lebesgue":
        return np.full(2 ** (n * L), 2.0 ** (-n * L))
    if kind == "random-balanced":
        if n != 1:
            raise MeasureError("random-balanced is defined for n = 1 only")
        return _random_balanced(L, float(p.get("B", 4.0)), rng)
    if kind == "cantor-like":
        eps = float(p.get("eps", 1e-3))
        if not 0 < eps <= 1:
            raise MeasureError("cantor-like needs 0 < eps <= 1")
        return _cantor_like(n, L, eps)
    if kind == "exponential-imbalanced":
        ratio = float(p.get("ratio", 4.0))
        if ratio <= 0:
            raise MeasureError("exponential-imbalanced needs ratio > 0")
        return _exponential(n, L, ratio, float(p.get("unit", 1.0)))
    if kind == "explicit":
        masses = p.get("leaf_masses")
        if masses is None:
            raise MeasureError("explicit preset needs leaf_masses")
        return np.asarray(masses, dtype=float)
    raise MeasureError(f"unknown preset kind {kind!r}")


def build_tree(n: int, L: int, preset: MeasurePreset | str = "lebesgue") -> MeasuredTree:
    if isinstance(preset, str):
        preset = MeasurePreset.parse(preset)
    if n < 1 or L < 1:
        raise MeasureError("need n >= 1 and L >= 1")
    return MeasuredTree.from_lex(n, L, preset_masses(n, L, preset))


def random_masses(n: int, L: int, rng: np.random.Generator, spread: float = 3.0) -> np.ndarray:
    """Log-uniform random leaf masses (lexicographic), used for explicit presets."""
    return np.exp(rng.uniform(-spread, spread, size=2 ** (n * L)))


def load_measure(path: str) -> MeasuredTree:
    with open(path) as fh:
        data = json.load(fh)
    try:
        return MeasuredTree.from_lex(int(data["n"]), int(data["L"]), data["leaf_masses"])
    except KeyError as exc:
        raise MeasureError(f"measure file lacks field {exc}") from None


def measure_from_arg(arg: str, n: int = 1, L: int = 4, seed: int = 0) -> MeasuredTree:
    """``preset:<kind>[:k=v,...]`` or a JSON measure file."""
    if arg.startswith("preset:"):
        return build_tree(n, L, MeasurePreset.parse(arg[len("preset:"):], seed))
    return load_measure(arg)


