"""Convex body averages as zonotopes.

For a leaf-constant f the set {<f psi>_Q : |psi| <= 1} is the zonotope with
generators f(x_j) mu(x_j) / mu(Q).  Membership in Minkowski combinations is
decided by a linear program for the gauge; John ellipsoids are computed on
the polar body by a log-barrier Newton method whose dual weights certify
the sandwich E in Z in sqrt(r (1 + eps)) E directly.
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass

import numpy as np
from scipy.optimize import linprog

from .dyadic import CubeId, MeasuredTree

RANK_TOL = 1e-10
MEMBER_TOL = 1e-9


class Zonotope:
    """{sum t_j g_j : |t_j| <= 1} for generator rows g_j."""

    def __init__(self, generators, provenance=None, d: int | None = None):
        G = np.asarray(generators, dtype=float)
        if G.ndim == 1:
            G = G.reshape(-1, 1) if d == 1 else G.reshape(1, -1)
        if G.size == 0:
            G = np.zeros((0, d if d is not None else 0))
        keep = np.any(G != 0, axis=1)
        self.generators = G[keep]
        self.d = G.shape[1]
        self.provenance = provenance

    def support(self, u) -> float:
        return support(self, u)

    def scaled(self, c: float) -> "Zonotope":
        if c < 0:
            raise ValueError("scale must be nonnegative")
        return Zonotope(c * self.generators, d=self.d)

    def __add__(self, other: "Zonotope") -> "Zonotope":
        if self.d != other.d:
            raise ValueError("dimension mismatch")
        return Zonotope(np.vstack([self.generators, other.generators]), d=self.d)

    def merged(self) -> "Zonotope":
        """Parallel generators combined into one (same body, fewer segments)."""
        G = self.generators
        if G.shape[0] <= 1:
            return self
        # scale by the max entry first so tiny generators do not underflow in the norm
        U = G / np.max(np.abs(G), axis=1)[:, None]
        U = U / np.linalg.norm(U, axis=1)[:, None]
        first = np.argmax(np.abs(U) > 1e-12, axis=1)
        sgn = np.sign(U[np.arange(U.shape[0]), first])
        U = U * sgn[:, None]
        keys = np.round(U, 11)
        _, inv = np.unique(keys, axis=0, return_inverse=True)
        inv = inv.reshape(-1)
        out = np.zeros((inv.max() + 1, self.d))
        np.add.at(out, inv, G * sgn[:, None])
        return Zonotope(out, d=self.d)

    def __repr__(self) -> str:
        return f"Zonotope(d={self.d}, generators={self.generators.shape[0]})"


def convex_body_avg(tree: MeasuredTree, f, Q: CubeId) -> Zonotope:
    f = np.asarray(f, dtype=float)
    if f.ndim == 1:
        f = f[:, None]
    a, b = tree.leaf_range(Q)
    G = f[a:b] * (tree.leaf_masses[a:b] / tree.measure(Q))[:, None]
    return Zonotope(G, provenance=Q, d=f.shape[1])


def minkowski(terms) -> Zonotope:
    """sum c_i Z_i for (c_i, Z_i) pairs with c_i >= 0."""
    terms = list(terms)
    if not terms:
        raise ValueError("empty Minkowski sum")
    d = terms[0][1].d
    parts = []
    for c, Z in terms:
        if Z.d != d:
            raise ValueError("dimension mismatch")
        if c < 0:
            raise ValueError("Minkowski coefficients must be nonnegative")
        parts.append(c * Z.generators)
    return Zonotope(np.vstack(parts), d=d)


def support(Z: Zonotope, u) -> float:
    u = np.asarray(u, dtype=float)
    if u.shape != (Z.d,):
        raise ValueError("dimension mismatch")
    if not np.any(u != 0):
        raise ValueError("zero direction")
    return float(np.sum(np.abs(Z.generators @ u)))


@dataclass
class MemberResult:
    member: bool
    gauge: float
    residual: float
    certificate: np.ndarray | None = None  # u with v.u > h(u) when not a member
    rel_residual: float = 0.0  # residual / (max|generator| + |v|)


def gauge(v, body) -> MemberResult:
    """Minkowski gauge of v for a zonotope (or (c, Z) pairs) via linear programming."""
    Z = minkowski(body) if isinstance(body, (list, tuple)) else body
    v = np.asarray(v, dtype=float).reshape(-1)
    if v.size != Z.d:
        raise ValueError("dimension mismatch")
    G = Z.generators
    vn = float(np.linalg.norm(v))
    if vn == 0:
        return MemberResult(True, 0.0, 0.0)
    if G.shape[0] == 0:
        return MemberResult(False, np.inf, vn, v.copy(), 1.0)
    if Z.d == 1:
        h = float(np.sum(np.abs(G)))
        g = abs(v[0]) / h
        return MemberResult(g <= 1 + MEMBER_TOL, g, 0.0, None if g <= 1 + MEMBER_TOL else np.sign(v))
    scale = float(np.max(np.abs(G)))
    # residuals are judged relative to the size of the data (scale invariant)
    tol = MEMBER_TOL * (scale + vn)
    Gs, vs = G / scale, v / scale
    # component of v outside the span of the generators
    coef, *_ = np.linalg.lstsq(Gs.T, vs, rcond=None)
    perp = vs - Gs.T @ coef
    if np.linalg.norm(perp) * scale > tol:
        r = float(np.linalg.norm(perp) * scale)
        return MemberResult(False, np.inf, r, perp, r / (scale + vn))
    N = G.shape[0]
    c = np.zeros(N + 1)
    c[-1] = 1.0
    A_eq = np.hstack([Gs.T, np.zeros((Z.d, 1))])
    eye = np.eye(N)
    A_ub = np.vstack([np.hstack([eye, -np.ones((N, 1))]), np.hstack([-eye, -np.ones((N, 1))])])
    b_ub = np.zeros(2 * N)
    res = linprog(c, A_ub=A_ub, b_ub=b_ub, A_eq=A_eq, b_eq=vs, bounds=[(None, None)] * N + [(0, None)],
                  method="highs-ds", options={"primal_feasibility_tolerance": 1e-10, "dual_feasibility_tolerance": 1e-10})
    if res.status != 0:
        return MemberResult(False, np.inf, np.inf, None, np.inf)
    t = res.x[:N]
    # one least-squares polish step removes the solver's feasibility slack
    dt, *_ = np.linalg.lstsq(Gs.T, vs - Gs.T @ t, rcond=None)
    if np.linalg.norm(Gs.T @ (t + dt) - vs) < np.linalg.norm(Gs.T @ t - vs):
        t = t + dt
    s = float(np.max(np.abs(t)))
    residual = float(np.linalg.norm(G.T @ t - v))
    ok = s <= 1 + MEMBER_TOL and residual <= tol
    cert = None
    if not ok:
        y = np.asarray(res.eqlin.marginals, dtype=float)
        if np.any(y != 0) and v @ y > np.sum(np.abs(G @ y)):
            cert = y
    return MemberResult(bool(ok), s, residual, cert, residual / (scale + vn))


def member(v, body) -> bool:
    return gauge(v, body).member


# John ellipsoids -----------------------------------------------------------

@dataclass
class Ellipsoid:
    """{sum x_j alpha_j e_j : |x| <= 1}; ``basis`` rows are e_j."""

    basis: np.ndarray
    semi_axes: np.ndarray
    eps: float = 0.0  # Z is contained in sqrt(r (1 + eps)) * self
    iterations: int = 0

    @property
    def r(self) -> int:
        return self.basis.shape[0]

    @property
    def d(self) -> int:
        return self.basis.shape[1]

    def support(self, u) -> float:
        u = np.asarray(u, dtype=float)
        return float(np.sqrt(np.sum((self.semi_axes * (self.basis @ u)) ** 2)))

    def gauge(self, v) -> float:
        """Ellipsoid norm of v (inf outside the carrier)."""
        v = np.asarray(v, dtype=float)
        c = self.basis @ v
        if np.linalg.norm(v - self.basis.T @ c) > 1e-9 * (1 + np.linalg.norm(v)):
            return np.inf
        if self.r == 0:
            return 0.0 if not np.any(v) else np.inf
        return float(np.sqrt(np.sum((c / self.semi_axes) ** 2)))

    def boundary_points(self, k: int, rng: np.random.Generator) -> np.ndarray:
        x = rng.normal(size=(k, self.r))
        x /= np.linalg.norm(x, axis=1, keepdims=True)
        return (x * self.semi_axes) @ self.basis

    def full_basis(self) -> tuple:
        """Orthonormal basis of R^d extending the axes, with zero semi-axes appended."""
        B = self.basis
        if self.r < self.d:
            # complete via QR of [B^T | I]
            q, _ = np.linalg.qr(np.hstack([B.T, np.eye(self.d)]))
            extra = q[:, self.r:self.d].T
            # orthogonalize extras against B explicitly
            extra = extra - (extra @ B.T) @ B
            extra, _ = np.linalg.qr(extra.T)
            B = np.vstack([B, extra.T[: self.d - self.r]])
        alphas = np.concatenate([self.semi_axes, np.zeros(self.d - self.r)])
        return B, alphas


def carrier(Z: Zonotope) -> np.ndarray:
    """Orthonormal rows spanning the generators (rank by SVD threshold)."""
    G = Z.generators
    if G.shape[0] == 0:
        return np.zeros((0, Z.d))
    _, s, vt = np.linalg.svd(G, full_matrices=False)
    r = int(np.sum(s > RANK_TOL * s[0]))
    return vt[:r]


def facet_normals(G: np.ndarray) -> np.ndarray:
    """Unit normals of all facets of the full-dimensional zonotope with generators G (N x r)."""
    N, r = G.shape
    if r == 1:
        return np.ones((1, 1))
    Gu = Zonotope(G).merged().generators
    Gu = Gu / np.linalg.norm(Gu, axis=1, keepdims=True)
    combos = np.array(list(itertools.combinations(range(Gu.shape[0]), r - 1)))
    if combos.size == 0:
        return np.zeros((0, r))
    S = Gu[combos]  # (M, r-1, r)
    # generalized cross product: signed (r-1)x(r-1) minors
    normals = np.empty((S.shape[0], r))
    for i in range(r):
        cols = [c for c in range(r) if c != i]
        normals[:, i] = (-1) ** i * (np.linalg.det(S[:, :, cols]) if r > 2 else S[:, 0, cols[0]])
    nrm = np.linalg.norm(normals, axis=1)
    normals = normals[nrm > 1e-12]
    normals /= np.linalg.norm(normals, axis=1, keepdims=True)
    first = np.argmax(np.abs(normals) > 1e-12, axis=1)
    normals *= np.sign(normals[np.arange(normals.shape[0]), first])[:, None]
    _, idx = np.unique(np.round(normals, 10), axis=0, return_index=True)
    return normals[np.sort(idx)]


def _sym_basis(r: int) -> np.ndarray:
    idx = [(i, j) for i in range(r) for j in range(i, r)]
    E = np.zeros((len(idx), r, r))
    for k, (i, j) in enumerate(idx):
        E[k, i, j] = E[k, j, i] = 1.0
    return E


def _barrier_weights(P: np.ndarray, gap: float) -> np.ndarray:
    """Dual weights for max log det M s.t. a^T M a <= 1 (a rows of P).

    Log-barrier Newton on the r(r+1)/2 entries of M; on the central path
    M^{-1} = sum p_k a_k a_k^T with p_k = 1 / (t s_k), and the duality gap
    is len(P) / t.
    """
    M_pts, r = P.shape
    # the optimal weights are invariant under P -> P T^T; whitening keeps H well conditioned
    Lc = np.linalg.cholesky(P.T @ P / M_pts)
    P = np.linalg.solve(Lc, P.T).T
    E = _sym_basis(r)
    C = np.einsum("ki,mij,kj->km", P, E, P)  # a^T M a = C @ x
    x = np.einsum("mij,ij->m", E, np.eye(r)) / (2 * np.max(np.sum(P * P, axis=1)))
    x /= np.einsum("mii->m", E).clip(min=1)  # diagonal entries only
    t = 1.0
    while True:
        for _ in range(200):
            Mx = np.einsum("m,mij->ij", x, E)
            Mi = np.linalg.inv(Mx)
            s = 1 - C @ x
            F = np.einsum("ij,mji->m", Mi, E)  # d/dx log det
            grad = -t * F + C.T @ (1 / s)
            K = Mi @ E
            A = np.einsum("mij,nji->mn", K, K)
            H = t * A + (C / s[:, None] ** 2).T @ C
            dx = -np.linalg.solve(H, grad)
            dec = float(-grad @ dx)
            if dec / 2 < 1e-12:
                break
            step = 1.0
            phi0 = -t * np.linalg.slogdet(Mx)[1] - np.sum(np.log(s))
            while True:
                xn = x + step * dx
                sn = 1 - C @ xn
                if np.all(sn > 0):
                    try:
                        ch = np.linalg.cholesky(np.einsum("m,mij->ij", xn, E))
                    except np.linalg.LinAlgError:
                        ch = None
                    if ch is not None:
                        ld = 2 * np.sum(np.log(np.diag(ch)))
                        if -t * ld - np.sum(np.log(sn)) <= phi0 - 0.25 * step * dec:
                            break
                step *= 0.5
                if step < 1e-14:
                    break
            if step < 1e-14:
                break
            x = xn
        if M_pts / t < gap or t > 1e16:
            s = 1 - C @ x
            return 1.0 / (t * s)
        t *= 8.0


def _enclosing_weights(P: np.ndarray, eps_target: float, max_rounds: int = 200) -> tuple:
    """Weights p for the centered minimum-volume ellipsoid enclosing +-P (M x r).

    The optimization runs on a working set; points of the full set violating
    the target are added until none remain.  Returns (X, eps, rounds) with
    X = sum p_k P_k P_k^T (sum p = 1) and max_k P_k^T X^{-1} P_k = r (1 + eps)
    over all of P, so eps is certified by the weights alone.
    """
    M, r = P.shape
    X0 = P.T @ P / M
    k0 = np.einsum("ij,jk,ik->i", P, np.linalg.inv(X0), P)
    size = min(M, max(4 * r * r, 16))
    work = np.sort(np.argsort(-k0, kind="stable")[:size])
    gap = eps_target * r / 4
    for rounds in range(1, max_rounds + 1):
        p = _barrier_weights(P[work], gap)
        p /= p.sum()
        X = P[work].T @ (p[:, None] * P[work])
        kappa = np.einsum("ij,jk,ik->i", P, np.linalg.inv(X), P)
        eps = float(np.max(kappa) / r - 1)
        if eps <= eps_target:
            return X, max(eps, 0.0), rounds
        inside = np.zeros(M, dtype=bool)
        inside[work] = True
        bad = np.where(~inside & (kappa > r * (1 + eps_target)))[0]
        if bad.size == 0:
            gap /= 10
            continue
        add = bad[np.argsort(-kappa[bad], kind="stable")[: max(4 * r, 16)]]
        work = np.sort(np.concatenate([work, add]))
    return X, max(eps, 0.0), rounds


def john_ellipsoid(Z: Zonotope, tol: float = 1e-6) -> Ellipsoid:
    """Maximum-volume inscribed ellipsoid of Z inside its carrier subspace.

    Guarantees E subset Z and Z subset sqrt(r)(1 + tol) E, certified by the
    dual weights (``eps`` records the achieved factor sqrt(1 + eps)).
    """
    V = carrier(Z)
    r = V.shape[0]
    if r == 0:
        return Ellipsoid(np.zeros((0, Z.d)), np.zeros(0))
    G = Z.generators @ V.T
    if r == 1:
        return Ellipsoid(V.copy(), np.array([float(np.sum(np.abs(G)))]))
    U = facet_normals(G)
    h = np.sum(np.abs(G @ U.T), axis=0)
    P = U / h[:, None]
    eps_target = min((1 + tol) ** 2 - 1, 2 * tol / r)
    X, eps, it = _enclosing_weights(P, eps_target)
    lam, W = np.linalg.eigh(X)
    axes = 1.0 / np.sqrt(lam * r * (1 + eps))
    # exact inscription: rescale if rounding pushed a facet constraint over
    basis = W.T @ V
    ell = Ellipsoid(basis, axes, eps, it)
    sup = np.sqrt(np.sum((axes * (U @ W)) ** 2, axis=1))  # ellipsoid support on facet normals
    worst = float(np.max(sup / h))
    if worst > 1:
        ell.semi_axes = axes / worst
        ell.eps = (1 + eps) * worst ** 2 - 1
    return ell


def sampled_vertices(Z: Zonotope, rng: np.random.Generator, k: int = 2000) -> np.ndarray:
    """Vertices sum sign(g.w) g for random w and for perturbed facet normals."""
    G = Z.generators
    W = rng.normal(size=(k, Z.d))
    V = carrier(Z)
    if V.shape[0] >= 2:
        U = facet_normals(G @ V.T) @ V
        pert = U[:, None, :] + 1e-7 * rng.normal(size=(U.shape[0], 4, Z.d))
        W = np.vstack([W, pert.reshape(-1, Z.d), -pert.reshape(-1, Z.d)])
    S = np.sign(W @ G.T)
    return S @ G


def sandwich_factor(Z: Zonotope, ell: Ellipsoid, rng: np.random.Generator, k: int = 2000) -> float:
    """max over sampled vertices of the ellipsoid gauge, divided by sqrt(r)."""
    if ell.r == 0:
        return 0.0
    verts = sampled_vertices(Z, rng, k)
    c = verts @ ell.basis.T
    g = np.sqrt(np.sum((c / ell.semi_axes) ** 2, axis=1))
    return float(np.max(g) / np.sqrt(ell.r))


def lemma_vector(Z: Zonotope, ell: Ellipsoid, A: float, u) -> np.ndarray:
    """v with v.e_j = A u_j <|f.e_j|>_Q in the (extended) John basis, |u_j| <= 1."""
    B, _ = ell.full_basis()
    u = np.asarray(u, dtype=float)
    hvals = np.array([np.sum(np.abs(Z.generators @ e)) for e in B])
    return B.T @ (A * u * hvals)


class FacetGauge:
    """Vectorized gauge of a fixed zonotope from its facet description.

    Exact for full-dimensional zonotopes inside the carrier: the gauge of v
    is max_u |u.v| / h(u) over facet normals u.  Vectors leaving the carrier
    get an infinite gauge.
    """

    def __init__(self, Z: Zonotope):
        self.d = Z.d
        self.V = carrier(Z)
        self.r = self.V.shape[0]
        G = Z.generators @ self.V.T if self.r else np.zeros((0, 0))
        self.scale = float(np.max(np.abs(Z.generators))) if Z.generators.size else 0.0
        if self.r == 1:
            self.U = np.ones((1, 1))
        elif self.r >= 2:
            self.U = facet_normals(G)
        else:
            self.U = np.zeros((0, 0))
        self.h = np.sum(np.abs(G @ self.U.T), axis=0) if self.r else np.zeros(0)

    def __call__(self, vs) -> np.ndarray:
        vs = np.atleast_2d(np.asarray(vs, dtype=float))
        norms = np.linalg.norm(vs, axis=1)
        if self.r == 0:
            return np.where(norms == 0, 0.0, np.inf)
        c = vs @ self.V.T
        perp = np.linalg.norm(vs - c @ self.V, axis=1)
        g = np.max(np.abs(c @ self.U.T) / self.h, axis=1)
        return np.where(perp > MEMBER_TOL * (1 + norms), np.inf, g)
