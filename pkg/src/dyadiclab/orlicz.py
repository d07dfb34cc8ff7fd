"""Young functions, local Luxemburg norms, B_p tests and Orlicz bumps."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import trapezoid

from . import _kernels
from .dyadic import MeasuredTree

GRID_LO, GRID_HI, GRID_N = 1e-8, 1e8, 10_000
BISECT_RTOL = 1e-10


class YoungError(ValueError):
    pass


@dataclass(frozen=True)
class YoungFunction:
    """Phi on [0, inf).

    kind ``power``: c t^r.  kind ``power_log``: c t^r log(e + t)^s.
    kind ``table``: piecewise-linear interpolation of (grid, values) with a
    linear segment to the origin and linear extrapolation past the grid.
    """
    kind: str
    r: float = 1.0
    s: float = 0.0
    c: float = 1.0
    grid: tuple = field(default=(), repr=False)
    values: tuple = field(default=(), repr=False)

    def __call__(self, t):
        t = np.maximum(np.asarray(t, dtype=float), 0.0)
        if self.kind == "power":
            return self.c * t ** self.r
        if self.kind == "power_log":
            return self.c * t ** self.r * np.log(np.e + t) ** self.s
        if self.kind == "table":
            g = np.asarray(self.grid)
            v = np.asarray(self.values)
            out = np.interp(t, np.concatenate([[0.0], g]), np.concatenate([[0.0], v]))
            slope = (v[-1] - v[-2]) / (g[-1] - g[-2])
            return np.where(t > g[-1], v[-1] + slope * (t - g[-1]), out)
        raise YoungError(f"unknown kind {self.kind!r}")

    def inverse(self, y: float) -> float:
        """Phi^{-1}(y) by bisection in log t."""
        lo, hi = 1e-300, 1.0
        while self(hi) < y:
            hi *= 2.0
            if hi > 1e300:
                raise YoungError("Phi does not reach the requested value")
        lo = hi / 2.0 if self(hi / 2.0) < y else lo
        for _ in range(200):
            mid = np.sqrt(lo * hi) if lo > 0 else hi / 2
            if self(mid) < y:
                lo = mid
            else:
                hi = mid
            if hi - lo <= 1e-15 * hi:
                break
        return float(hi)

    def validate(self, tol: float = 1e-10) -> dict:
        """Sampled checks: Phi(0) = 0, increasing, convex, and Phi(t)/t growth at the grid tail."""
        t = np.logspace(-6, 6, 2001)
        v = self(t)
        zero = float(self(0.0)) == 0.0
        inc = bool(np.all(np.diff(v) >= -tol * np.abs(v[1:])))
        # second differences on a non-uniform grid, via slopes
        slopes = np.diff(v) / np.diff(t)
        convex = bool(np.all(np.diff(slopes) >= -tol * np.maximum(1.0, np.abs(slopes[1:]))))
        ratio = v / t
        superlinear = bool(ratio[-1] > 10 * ratio[len(ratio) // 2])
        return {"zero": zero, "increasing": inc, "convex": convex, "superlinear": superlinear,
                "valid": zero and inc and convex}

    def to_json(self) -> dict:
        if self.kind == "table":
            return {"kind": "table", "grid": list(self.grid), "values": list(self.values)}
        return {"kind": self.kind, "r": self.r, "s": self.s, "c": self.c}


def power(r: float, c: float = 1.0) -> YoungFunction:
    if r < 1:
        raise YoungError("power Young functions need r >= 1")
    return YoungFunction("power", r=float(r), c=float(c))


def power_log(r: float, s: float, c: float = 1.0) -> YoungFunction:
    if r < 1:
        raise YoungError("power_log Young functions need r >= 1")
    return YoungFunction("power_log", r=float(r), s=float(s), c=float(c))


def table(grid, values) -> YoungFunction:
    g = np.asarray(grid, dtype=float)
    v = np.asarray(values, dtype=float)
    if g.ndim != 1 or g.shape != v.shape or g.size < 2 or np.any(np.diff(g) <= 0) or g[0] <= 0:
        raise YoungError("table needs an increasing positive grid with matching values")
    return YoungFunction("table", grid=tuple(g), values=tuple(v))


def presets(p: float) -> dict:
    """Named Young functions for exponent p; ``bp`` tells whether B_p holds."""
    return {
        "lp": (power(p), False),
        "sub_power": (power(max(1.0, p - 0.5)), True),
        "log_damped": (power_log(p, -1.5), True),
        "log_bump": (power_log(p, p - 1 + 0.5), False),
    }


def parse_young(text: str) -> YoungFunction:
    """``power:r=2``, ``power_log:p=2,s=1`` (``p`` is accepted for ``r``)."""
    kind, _, rest = text.partition(":")
    args = {}
    for item in filter(None, rest.split(",")):
        k, _, v = item.partition("=")
        args[k.strip()] = float(v)
    if "p" in args:
        args.setdefault("r", args.pop("p"))
    if kind == "power":
        return power(args.get("r", 1.0), args.get("c", 1.0))
    if kind == "power_log":
        return power_log(args.get("r", 1.0), args.get("s", 0.0), args.get("c", 1.0))
    raise YoungError(f"cannot parse Young function {text!r}")


def young_from_json(obj: dict) -> YoungFunction:
    if obj["kind"] == "table":
        return table(obj["grid"], obj["values"])
    return YoungFunction(obj["kind"], r=obj["r"], s=obj.get("s", 0.0), c=obj.get("c", 1.0))


# norms -----------------------------------------------------------------------

def luxemburg(vals, weights, Phi: YoungFunction, rtol: float = BISECT_RTOL) -> np.ndarray:
    """Vectorized inf{lam : sum_i weights_i Phi(|vals_i| / lam) <= 1} along the last axis.

    ``weights`` are probabilities along the last axis (broadcastable).
    """
    a = np.abs(np.asarray(vals, dtype=float))
    w = np.broadcast_to(np.asarray(weights, dtype=float), a.shape)
    c = Phi.inverse(1.0)
    avg = np.sum(w * a, axis=-1)
    top = np.max(a, axis=-1)
    zero = top == 0
    lo = np.where(zero, 1.0, avg / c)
    hi = np.where(zero, 1.0, top / c)
    llo, lhi = np.log(np.maximum(lo, 1e-300)), np.log(np.maximum(hi, 1e-300))
    steps = int(np.ceil(np.log2(max(float(np.max(lhi - llo)), rtol) / rtol))) + 1
    for _ in range(steps):
        mid = 0.5 * (llo + lhi)
        val = np.sum(w * Phi(a / np.exp(mid)[..., None]), axis=-1)
        above = val > 1.0
        llo = np.where(above, mid, llo)
        lhi = np.where(above, lhi, mid)
    return np.where(zero, 0.0, np.exp(lhi))


def local_orlicz_norm(tree: MeasuredTree, f, Q, Phi: YoungFunction) -> float:
    """||f||_{Phi,Q} for a scalar leaf function."""
    f = np.asarray(f, dtype=float)
    lo, hi = tree.leaf_range(Q)
    mu = tree.leaf_masses[lo:hi]
    return float(luxemburg(f[lo:hi], mu / mu.sum(), Phi))


def level_orlicz_norms(tree: MeasuredTree, f, Phi: YoungFunction, lv: int) -> np.ndarray:
    span = 2 ** (tree.n * (tree.L - lv))
    mu = tree.leaf_masses.reshape(-1, span)
    return luxemburg(np.asarray(f, dtype=float).reshape(-1, span), mu / mu.sum(axis=1, keepdims=True), Phi)


def orlicz_maximal(tree: MeasuredTree, f, Phi: YoungFunction) -> np.ndarray:
    """M_Phi f(x) = max over cubes Q containing x of ||f||_{Phi,Q}."""
    out = np.zeros(tree.nleaves)
    for lv in range(tree.L + 1):
        span = 2 ** (tree.n * (tree.L - lv))
        out = np.maximum(out, np.repeat(level_orlicz_norms(tree, f, Phi, lv), span))
    return out


def dyadic_maximal(tree: MeasuredTree, f) -> np.ndarray:
    """Plain dyadic maximal function of |f| (independent of the Orlicz machinery)."""
    a = np.abs(np.asarray(f, dtype=float)) * tree.leaf_masses
    out = np.zeros(tree.nleaves)
    for lv in range(tree.L + 1):
        span = 2 ** (tree.n * (tree.L - lv))
        avg = a.reshape(-1, span).sum(axis=1) / tree.mu[lv]
        out = np.maximum(out, np.repeat(avg, span))
    return out


def dual_young(Phi: YoungFunction, lo: float = GRID_LO, hi: float = GRID_HI, n: int = GRID_N) -> YoungFunction:
    """Legendre transform sup_s (s t - Phi(s)) over a log grid of s.

    The supremum over grid points is exact for the piecewise-linear interpolant
    of Phi: for slope t between consecutive chord slopes the maximizer is the
    shared vertex.  Slopes are made monotone first (convex envelope cleanup).
    """
    s = np.logspace(np.log10(lo), np.log10(hi), n)
    v = Phi(s)
    s = np.concatenate([[0.0], s])
    v = np.concatenate([[0.0], v])
    slopes = np.maximum.accumulate(np.diff(v) / np.diff(s))
    t = np.logspace(np.log10(max(lo, slopes[0] * 1.0000001) if slopes[0] > 0 else lo), np.log10(hi), n)
    idx = np.searchsorted(slopes, t, side="left")  # vertex index maximizing s t - Phi(s)
    idx = np.minimum(idx, s.size - 1)
    dual = np.maximum(s[idx] * t - v[idx], 0.0)
    dual = np.maximum.accumulate(dual)
    keep = np.concatenate([[True], np.diff(t) > 0])
    return table(t[keep], dual[keep])


@dataclass
class BpReport:
    finite: bool
    tail_estimate: float
    quadrature: float
    tail_fit: dict
    analytic: bool | None
    heuristic: bool = True

    def to_json(self) -> dict:
        return {"finite": self.finite, "tail_estimate": self.tail_estimate, "quadrature": self.quadrature,
                "tail_fit": self.tail_fit, "analytic": self.analytic, "heuristic": self.heuristic}


def analytic_bp(Phi: YoungFunction, p: float) -> bool | None:
    if Phi.kind == "power":
        return Phi.r < p
    if Phi.kind == "power_log":
        return Phi.r < p or (Phi.r == p and Phi.s < -1)
    return None


def bp_check(Phi: YoungFunction, p: float, T: float = 1e8, margin: float = 0.01) -> BpReport:
    """Decide int_1^inf Phi(t) / t^p dt/t < inf numerically (heuristic).

    With u = ln t the integrand is h(u) = Phi(e^u) e^{-p u}.  The tail of
    log h is fitted by c - a log u - b u; the integral is declared finite when
    b > margin (exponential decay) or b is within the margin and a > 1 + margin.
    """
    if p <= 1:
        raise ValueError("p must exceed 1")
    U = np.log(T)
    u = np.linspace(0.0, U, 20001)
    h = Phi(np.exp(u)) * np.exp(-p * u)
    quad = float(trapezoid(h, u))
    tail = u >= 0.75 * U
    X = np.column_stack([np.ones(tail.sum()), -np.log(u[tail]), -u[tail]])
    with np.errstate(divide="ignore"):
        coef, *_ = np.linalg.lstsq(X, np.log(np.maximum(h[tail], 1e-300)), rcond=None)
    c0, a, b = (float(x) for x in coef)
    if b > margin:
        finite = True
        rest = h[-1] / b  # exponential tail integral
    elif abs(b) <= margin and a > 1 + margin:
        finite = True
        rest = h[-1] * U / (a - 1)  # power tail in u
    else:
        finite = False
        rest = float("inf")
    return BpReport(finite, float(quad + rest) if finite else float("inf"), quad, {"a": a, "b": b}, analytic_bp(Phi, p))


# bumps -----------------------------------------------------------------------

def bump_constant(W, V, Phi: YoungFunction, Psi: YoungFunction, p: float, N: int, hs) -> dict:
    """sup over pairs (I, J) with dist <= N + 2 of
    c_p^b(I, J) || ||V^{1/p}(x) W^{-1/p}(y)||_{Phi_x, I} ||_{Psi_y, J}^p.

    The inner norm runs over x in I, the outer over y in J.  Pairs follow the
    A_p^N convention: I = J at every level with weight 1, off-diagonal pairs
    among cubes carrying Haar functions.
    """
    from .weights import _c_block, _level_distance
    tree = W.tree
    if V.tree is not tree and V.tree.nleaves != tree.nleaves:
        raise ValueError("weights live on different trees")
    K = _kernels.pair_opnorms(V.power(1.0 / p), W.power(-1.0 / p))  # K[x, y]
    mu = tree.leaf_masses
    inner = []
    for li in range(tree.L + 1):
        span = 2 ** (tree.n * (tree.L - li))
        blocks = K.reshape(tree.count(li), span, tree.nleaves).transpose(0, 2, 1)  # (I, y, x in I)
        wts = (mu.reshape(-1, span) / tree.mu[li][:, None])[:, None, :]
        inner.append(luxemburg(blocks, wts, Phi))  # (count_li, nleaves)
    best, arg = 0.0, None
    for li in range(tree.L + 1):
        for lj in range(tree.L + 1):
            diag = li == lj
            off_ok = li < hs.levels and lj < hs.levels and abs(li - lj) <= N + 2
            if not diag and not off_ok:
                continue
            span = 2 ** (tree.n * (tree.L - lj))
            vals = inner[li].reshape(tree.count(li), tree.count(lj), span)
            wts = (mu.reshape(-1, span) / tree.mu[lj][:, None])[None, :, :]
            outer = luxemburg(vals, wts, Psi) ** p  # (I, J)
            if off_ok:
                c = _c_block(hs, p, li, lj)
                mask = _level_distance(tree.n, li, lj, tree.count(li), tree.count(lj)) <= N + 2
            else:
                c = np.zeros((tree.count(li), tree.count(lj)))
                mask = np.zeros_like(c, dtype=bool)
            if diag:
                idx = np.arange(tree.count(li))
                c = c.copy()
                c[idx, idx] = 1.0
                mask = mask.copy()
                mask[idx, idx] = True
            cand = np.where(mask, c * outer, -np.inf)
            k = int(np.argmax(cand))
            if cand.flat[k] > best:
                best = float(cand.flat[k])
                arg = (tree.cube(li, k // tree.count(lj)), tree.cube(lj, k % tree.count(lj)))
    return {"value": best, "argmax": [list(arg[0]), list(arg[1])] if arg else None, "p": p, "N": N}


def maximal_ratio(tree: MeasuredTree, Phi: YoungFunction, p: float, trials: int, rng: np.random.Generator) -> float:
    """max over random f of ||M_Phi f||_p / ||f||_p.

    Half the inputs are single-leaf spikes of random height (these expose the
    unbounded case), the rest are spikes plus a smooth part.
    """
    mu = tree.leaf_masses
    best = 0.0
    for i in range(trials):
        f = np.zeros(tree.nleaves)
        leaf = rng.integers(tree.nleaves)
        f[leaf] = np.exp(rng.uniform(-3, 3)) / mu[leaf] ** (1 / p)
        if i % 2:
            f += np.exp(rng.uniform(-3, 3)) * rng.uniform(0, 1, tree.nleaves)
        M = orlicz_maximal(tree, f, Phi)
        r = (np.sum(M ** p * mu) / np.sum(np.abs(f) ** p * mu)) ** (1 / p)
        best = max(best, float(r))
    return best
