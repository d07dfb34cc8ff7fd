import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from dyadiclab.convexbody import (FacetGauge, Zonotope, convex_body_avg, facet_normals, gauge,
                                  john_ellipsoid, lemma_vector, member, minkowski,
                                  sandwich_factor, support)
from dyadiclab.dyadic import build_tree


def test_constant_function_gives_segment():
    t = build_tree(1, 3)
    v = np.array([1.0, -2.0])
    Z = convex_body_avg(t, np.tile(v, (8, 1)), t.root).merged()
    assert Z.generators.shape[0] == 1
    assert support(Z, v / np.linalg.norm(v)) == pytest.approx(np.linalg.norm(v))


def test_scalar_body_is_interval():
    t = build_tree(1, 3)
    f = np.random.default_rng(0).normal(size=8)
    Z = convex_body_avg(t, f, t.root)
    assert support(Z, [1.0]) == pytest.approx(np.mean(np.abs(f)))
    assert support(Z, [-1.0]) == pytest.approx(np.mean(np.abs(f)))


def test_square_example():
    t = build_tree(1, 1)
    Z = convex_body_avg(t, np.eye(2), t.root)
    verts = np.array([[a, b] for a in (-0.5, 0.5) for b in (-0.5, 0.5)])
    u = np.array([1.0, 1.0]) / np.sqrt(2)
    assert support(Z, u) == pytest.approx(np.max(verts @ u))
    assert member([0.5, -0.5], Z) and not member([0.6, 0.0], Z)
    assert member([0.0, 0.0], Z)


def test_coordinate_projection_identity():
    t = build_tree(1, 4)
    f = np.random.default_rng(1).normal(size=(16, 3))
    Z = convex_body_avg(t, f, t.root)
    for j in range(3):
        e = np.zeros(3)
        e[j] = 1
        assert support(Z, e) == pytest.approx(np.mean(np.abs(f[:, j])))


def test_john_segment():
    v = np.array([3.0, 4.0])
    ell = john_ellipsoid(Zonotope([v]))
    assert ell.r == 1
    assert abs(ell.basis[0] @ v) == pytest.approx(5.0)
    assert ell.semi_axes[0] == pytest.approx(5.0, rel=1e-6)


def test_john_cube_is_unit_ball():
    for d in (2, 3):
        Z = Zonotope(np.eye(d))
        ell = john_ellipsoid(Z)
        assert np.allclose(ell.semi_axes, 1.0, rtol=1e-4)
        # diagonal vertex sits exactly sqrt(d) out in the ellipsoid norm
        assert sandwich_factor(Z, ell, np.random.default_rng(0)) == pytest.approx(1.0, rel=1e-4)


def test_john_hexagon_vs_disk_grid():
    angles = np.array([0, 2 * np.pi / 3, 4 * np.pi / 3])
    Z = Zonotope(np.c_[np.cos(angles), np.sin(angles)])
    ell = john_ellipsoid(Z)
    theta = np.linspace(0, 2 * np.pi, 20001)
    r_max = min(support(Z, np.array([np.cos(a), np.sin(a)])) for a in theta)
    assert r_max == pytest.approx(np.sqrt(3), rel=1e-6)
    assert np.allclose(ell.semi_axes, r_max, rtol=1e-4)


def test_zero_body():
    ell = john_ellipsoid(Zonotope(np.zeros((3, 2))))
    assert ell.r == 0


def _cvxpy_john_logdet(Z):
    cp = pytest.importorskip("cvxpy")
    U = facet_normals(Z.generators)
    h = np.sum(np.abs(Z.generators @ U.T), axis=0)
    B = cp.Variable((Z.d, Z.d), PSD=True)
    cons = [cp.norm(B @ U[i]) <= h[i] for i in range(U.shape[0])]
    prob = cp.Problem(cp.Maximize(cp.log_det(B)), cons)
    prob.solve()
    return float(prob.value)


@pytest.mark.parametrize("seed", range(5))
def test_john_matches_cvxpy(seed):
    rng = np.random.default_rng(seed)
    d = 2 + seed % 2
    Z = Zonotope(rng.normal(size=(5 + seed, d)))
    ell = john_ellipsoid(Z)
    ours = float(np.sum(np.log(ell.semi_axes)))
    assert ours == pytest.approx(_cvxpy_john_logdet(Z), abs=1e-3)


def test_facet_gauge_agrees_with_lp():
    rng = np.random.default_rng(3)
    for _ in range(10):
        Z = Zonotope(rng.normal(size=(6, 3)))
        fg = FacetGauge(Z)
        vs = rng.normal(size=(20, 3)) * 3
        for v, g in zip(vs, fg(vs)):
            assert gauge(v, Z).gauge == pytest.approx(g, rel=1e-7)


def test_lemma_vector_member():
    rng = np.random.default_rng(4)
    t = build_tree(1, 4)
    for _ in range(20):
        f = rng.normal(size=(16, 3))
        Z = convex_body_avg(t, f, t.root)
        ell = john_ellipsoid(Z)
        v = lemma_vector(Z, ell, 1.5, rng.uniform(-1, 1, 3))
        assert member(v, [(1.5 * 3, Z)])


zonos = st.builds(lambda k, d, seed: Zonotope(np.random.default_rng(seed).normal(size=(k, d))),
                  st.integers(1, 10), st.integers(1, 4), st.integers(0, 2 ** 31))


@settings(max_examples=40, deadline=None)
@given(zonos, st.integers(0, 2 ** 31))
def test_member_support_consistency(Z, seed):
    rng = np.random.default_rng(seed)
    U = rng.normal(size=(200, Z.d))
    h = np.abs(U @ Z.generators.T).sum(axis=1)
    for v in rng.normal(size=(5, Z.d)) * rng.uniform(0.1, 3):
        res = gauge(v, Z)
        if res.member:
            assert np.all(U @ v <= h + 1e-9 * (1 + np.abs(h)))
        else:
            u = res.certificate
            viol = np.any(U @ v > h) or (u is not None and v @ u > np.abs(Z.generators @ u).sum())
            assert viol


@settings(max_examples=25, deadline=None)
@given(zonos, st.integers(0, 2 ** 31))
def test_john_sandwich(Z, seed):
    rng = np.random.default_rng(seed)
    ell = john_ellipsoid(Z)
    assert sandwich_factor(Z, ell, rng, k=500) <= np.sqrt(1 + ell.eps) * (1 + 1e-6)
    if ell.r:
        # boundary points of the ellipsoid lie in Z
        w = rng.normal(size=(20, ell.r))
        w /= np.linalg.norm(w, axis=1, keepdims=True)
        pts = (w * ell.semi_axes) @ ell.basis
        assert all(gauge(p, Z).gauge <= 1 + 1e-6 for p in pts)


@settings(max_examples=40, deadline=None)
@given(zonos, zonos)
def test_minkowski_commutes(A, B):
    if A.d != B.d:
        return
    u = np.random.default_rng(0).normal(size=A.d)
    if not np.any(u):
        return
    assert support(A + B, u) == pytest.approx(support(B + A, u))
    assert support(minkowski([(2.0, A), (1.0, B)]), u) == pytest.approx(2 * support(A, u) + support(B, u))
