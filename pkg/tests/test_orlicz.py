import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from dyadiclab import orlicz as oz
from dyadiclab import weights as wt
from dyadiclab.dyadic import MeasuredTree, build_tree, dyadic_distance, random_masses
from dyadiclab.haar import build_haar


def _tree(seed, L=4):
    return MeasuredTree(1, L, random_masses(1, L, np.random.default_rng(seed)))


def test_parse_and_validate():
    P = oz.parse_young("power_log:p=2,s=1")
    assert P.kind == "power_log" and P.r == 2 and P.s == 1
    assert oz.young_from_json(P.to_json()) == P
    v = P.validate()
    assert v["valid"] and v["superlinear"]
    assert not oz.power(1.0).validate()["superlinear"]
    with pytest.raises(oz.YoungError):
        oz.parse_young("cosh:r=2")
    with pytest.raises(oz.YoungError):
        oz.power(0.5)


def test_inverse():
    P = oz.power_log(2.0, 1.0)
    for y in (1e-6, 1.0, 1e6):
        assert P(P.inverse(y)) == pytest.approx(y, rel=1e-12)


def test_power_norm_closed_form():
    t = _tree(0)
    f = np.random.default_rng(1).normal(size=16)
    mu = t.leaf_masses
    for p in (1.0, 2.0, 3.5):
        expect = (np.sum(np.abs(f) ** p * mu) / mu.sum()) ** (1 / p)
        assert oz.local_orlicz_norm(t, f, t.root, oz.power(p)) == pytest.approx(expect, rel=1e-9)


def test_constant_function_norm():
    t = _tree(2)
    assert oz.local_orlicz_norm(t, np.full(16, 3.0), t.root, oz.power(1.0)) == pytest.approx(3.0, rel=1e-9)
    P = oz.power_log(2.0, 1.5, c=0.3)
    assert oz.local_orlicz_norm(t, np.full(16, 3.0), t.root, P) == pytest.approx(3.0 / P.inverse(1.0), rel=1e-9)


def test_maximal_with_phi_t_is_dyadic_maximal():
    t = _tree(3, 6)
    f = np.random.default_rng(4).normal(size=t.nleaves)
    assert np.allclose(oz.orlicz_maximal(t, f, oz.power(1.0)), oz.dyadic_maximal(t, f), rtol=1e-9, atol=1e-12)


def test_dual_quadratic_is_self_dual():
    D = oz.dual_young(oz.power(2.0, 0.5))
    t = np.logspace(-2, 3, 50)
    assert np.allclose(D(t), t ** 2 / 2, rtol=1e-3)


@pytest.mark.parametrize("p", [1.5, 3.0])
def test_dual_power(p):
    pp = p / (p - 1)
    D = oz.dual_young(oz.power(p, 1 / p))
    t = np.logspace(-1, 2, 50)
    assert np.allclose(D(t), t ** pp / pp, rtol=1e-3)


def test_table_biconjugate():
    g = np.logspace(-3, 3, 400)
    P = oz.table(g, g ** 2 * np.log(np.e + g))
    B = oz.dual_young(oz.dual_young(P))
    t = np.logspace(-1, 2, 60)
    assert np.allclose(B(t), P(t), rtol=1e-4)


def test_bp_examples():
    p = 2.0
    assert oz.bp_check(oz.power(p - 0.5), p).finite
    assert not oz.bp_check(oz.power(p), p).finite
    assert oz.bp_check(oz.power_log(p, -1.5), p).finite
    for name, (P, bp) in oz.presets(p).items():
        rep = oz.bp_check(P, p)
        assert rep.finite == bp == rep.analytic, name
        assert rep.heuristic and isinstance(rep.tail_estimate, float)


def test_bump_collapses_for_identity_weights():
    t = build_tree(1, 4)
    hs = build_haar(t)
    I = wt.MatrixWeight.identity(t, 2)
    p, N = 2.0, 1
    got = oz.bump_constant(I, I, oz.power(p), oz.power(p), p, N, hs)["value"]
    # oracle: 1 on the diagonal, c_p^b over eligible off-diagonal pairs among Haar cubes
    cubes = [t.cube(lv, k) for lv in range(hs.levels) for k in range(t.count(lv))]
    best = 1.0
    for Q in cubes:
        for R in cubes:
            if Q != R and dyadic_distance(t, Q, R) <= N + 2:
                best = max(best, wt.c_pb(hs, p, Q, R))
    assert got == pytest.approx(best, rel=1e-8)


def test_bump_dominates_diagonal_ap_for_power():
    # Phi = Psi = t^{p'}-type bumps at p = 2 dominate the A_2 diagonal term
    t = _tree(5, 3)
    hs = build_haar(t)
    W = wt.random_weight(t, 2, np.random.default_rng(6), kappa_max=50)
    rep = oz.bump_constant(W, W, oz.power(2.0), oz.power(2.0), 2.0, 0, hs)
    assert rep["value"] >= 1.0 and rep["argmax"] is not None


def test_maximal_ratio_lp_grows():
    a = oz.maximal_ratio(build_tree(1, 3), oz.power(2.0), 2.0, 40, np.random.default_rng(0))
    b = oz.maximal_ratio(build_tree(1, 8), oz.power(2.0), 2.0, 40, np.random.default_rng(0))
    assert b > a


functions = st.builds(lambda seed: np.random.default_rng(seed).normal(size=16) * np.exp(np.random.default_rng(seed + 1).normal(size=16)),
                      st.integers(0, 2 ** 30))
phis = st.sampled_from([oz.power(1.5), oz.power(2.0), oz.power_log(2.0, 1.0), oz.power_log(1.5, -0.3), oz.power(3.0)])


@settings(max_examples=60, deadline=None)
@given(functions, functions, phis, st.integers(0, 4))
def test_norm_homogeneity_and_triangle(f, g, P, lv):
    t = _tree(7)
    Q = t.cube(lv, 0)
    n = lambda h: oz.local_orlicz_norm(t, h, Q, P)  # noqa: E731
    assert n(3.5 * f) == pytest.approx(3.5 * n(f), rel=1e-8, abs=1e-300)
    assert n(f + g) <= (n(f) + n(g)) * (1 + 1e-8)


@settings(max_examples=40, deadline=None)
@given(functions, functions, st.sampled_from([oz.power(2.0), oz.power_log(2.0, 1.0), oz.power(3.0)]))
def test_generalized_holder(f, g, P):
    t = _tree(8)
    D = oz.dual_young(P)
    lhs = np.sum(np.abs(f * g) * t.leaf_masses) / t.mu[0][0]
    rhs = 2 * oz.local_orlicz_norm(t, f, t.root, P) * oz.local_orlicz_norm(t, g, t.root, D)
    assert lhs <= rhs * (1 + 1e-9)
