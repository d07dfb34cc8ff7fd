import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from dyadiclab.dyadic import CubeId, MeasuredTree, MeasurePreset, build_tree, random_masses
from dyadiclab.haar import build_haar, xi
from dyadiclab.shifts import (MartingaleMultiplier, apply_multiplier, apply_shift, check_cz_invariants,
                              cz_decompose, haar_multiplier, is_L1_normalized, l1_normalize, random_shift,
                              shift_from_json, shifts_sum_equal, t_separated_split, weak_type_experiment,
                              zero_shift)


def _avg(tree, f):
    return np.sum(f * tree.leaf_masses) / tree.mu[0][0]


def test_zero_shift_is_zero():
    hs = build_haar(build_tree(1, 4))
    f = np.random.default_rng(0).normal(size=16)
    assert np.array_equal(apply_shift(zero_shift(hs, 1, 1), f), np.zeros(16))


def test_identity_multiplier_projects_off_constants():
    t = build_tree(1, 5, MeasurePreset("random-balanced", {}, 3))
    hs = build_haar(t)
    f = np.random.default_rng(1).normal(size=t.nleaves)
    assert np.allclose(apply_shift(haar_multiplier(hs), f), f - _avg(t, f), atol=1e-12)


def test_vector_action_componentwise():
    hs = build_haar(build_tree(1, 4))
    rng = np.random.default_rng(2)
    T = random_shift(hs, 1, 1, rng)
    f = rng.normal(size=(16, 2))
    out = apply_shift(T, f)
    assert np.allclose(out[:, 0], apply_shift(T, f[:, 0]))
    assert np.allclose(out[:, 1], apply_shift(T, f[:, 1]))


def test_martingale_multiplier_examples():
    t = MeasuredTree(1, 4, random_masses(1, 4, np.random.default_rng(3)))
    f = np.random.default_rng(4).normal(size=16)
    plus = apply_multiplier(MartingaleMultiplier.constant(t, 1.0), f)
    minus = apply_multiplier(MartingaleMultiplier.constant(t, -1.0), f)
    assert np.allclose(plus, f - _avg(t, f))
    assert np.allclose(minus, _avg(t, f) - f)
    sig = MartingaleMultiplier.random(t, np.random.default_rng(5))
    assert np.allclose(apply_multiplier(sig, np.full(16, 3.0)), 0.0)


def test_l1_normalized_examples():
    hs = build_haar(build_tree(1, 5))
    assert is_L1_normalized(zero_shift(hs), 0.1).verdict
    v = is_L1_normalized(haar_multiplier(hs), 1.0)
    assert v.verdict and v.achieved == pytest.approx(1.0, rel=1e-12)
    hs2 = build_haar(build_tree(1, 5, MeasurePreset("exponential-imbalanced", {"ratio": 50.0})))
    assert not is_L1_normalized(haar_multiplier(hs2), 5.0).verdict
    # after rescaling each term has kernel <= xi00^2 / mu(Q); there are 2^(s+t) terms per Q
    T = random_shift(hs2, 1, 1, np.random.default_rng(0))
    assert is_L1_normalized(l1_normalize(T), 4 * xi(hs2, 0, 0) ** 2).verdict


def test_t_separated_split():
    hs = build_haar(build_tree(1, 6))
    rng = np.random.default_rng(6)
    T0 = random_shift(hs, 1, 0, rng)
    assert len(t_separated_split(T0)) == 1
    T = random_shift(hs, 0, 1, rng)
    parts = t_separated_split(T)
    assert len(parts) == 2 and shifts_sum_equal(parts, T)
    for k, P in enumerate(parts):
        assert np.all(P.q_level % 2 == k)
    one = T.restrict(T.q_level == 2)
    assert sum(P.c.size > 0 for P in t_separated_split(one)) == 1


def test_json_roundtrip():
    hs = build_haar(build_tree(2, 3))
    T = random_shift(hs, 1, 0, np.random.default_rng(7))
    U = shift_from_json(hs, T.to_json())
    assert np.allclose(U.matrix(), T.matrix())


def test_cz_examples():
    t = build_tree(1, 6)
    f = np.ones(t.nleaves)
    cz = cz_decompose(t, f, 2.0)
    assert cz.stopping_cubes == [] and np.allclose(cz.g, f)
    spike = np.zeros(t.nleaves)
    spike[17] = 100 / t.leaf_masses[17]
    cz = cz_decompose(t, spike, 1.0, exact=True)
    assert len(cz.stopping_cubes) == 1 and check_cz_invariants(t, spike, cz) == []
    Q = cz.stopping_cubes[0]
    assert t.contains(Q, CubeId(6, (17,)))
    two = np.zeros(t.nleaves)
    two[3] = two[60] = 50 / t.leaf_masses[3]
    cz = cz_decompose(t, two, 150.0)
    assert len(cz.stopping_cubes) == 2


def test_weak_type_zero_and_stable_lebesgue():
    hs = build_haar(build_tree(1, 4))
    assert weak_type_experiment(zero_shift(hs), 3, np.random.default_rng(0))["exact"] == 0.0
    vals = []
    for L in (4, 6, 8):
        T = haar_multiplier(build_haar(build_tree(1, L)))
        vals.append(weak_type_experiment(T, 20, np.random.default_rng(L))["exact"])
    assert max(vals) < 10


def test_weak_type_grows_on_unbalanced():
    vals = []
    for L in (3, 5, 7):
        hs = build_haar(build_tree(1, L, MeasurePreset("exponential-imbalanced", {"ratio": 4.0})))
        T = random_shift(hs, 0, 1, np.random.default_rng(0), kind="nondegenerate")
        vals.append(weak_type_experiment(T, 30, np.random.default_rng(1))["exact"])
    assert vals[-1] > vals[0]


trees = st.builds(lambda n, L, seed: MeasuredTree(n, L, random_masses(n, L, np.random.default_rng(seed))),
                  st.integers(1, 2), st.integers(2, 4), st.integers(0, 2 ** 31))


@settings(max_examples=40, deadline=None)
@given(trees, st.integers(0, 1), st.integers(0, 1), st.integers(0, 2 ** 31))
def test_linearity_and_adjoint(t, s, tt, seed):
    rng = np.random.default_rng(seed)
    hs = build_haar(t)
    T = random_shift(hs, s, tt, rng)
    f, g = rng.normal(size=(2, t.nleaves))
    a, b = rng.normal(size=2)
    lhs = apply_shift(T, a * f + b * g)
    rhs = a * apply_shift(T, f) + b * apply_shift(T, g)
    assert np.allclose(lhs, rhs, rtol=1e-12, atol=1e-12 * (1 + np.abs(rhs).max()))
    mu = t.leaf_masses
    l = np.sum(apply_shift(T, f) * g * mu)
    r = np.sum(f * apply_shift(T.adjoint(), g) * mu)
    assert l == pytest.approx(r, rel=1e-9, abs=1e-9)


@settings(max_examples=40, deadline=None)
@given(trees, st.floats(0.1, 10), st.integers(0, 2 ** 31))
def test_cz_invariants(t, lam, seed):
    rng = np.random.default_rng(seed)
    f = rng.normal(size=t.nleaves) * rng.exponential(size=t.nleaves) * 3
    cz = cz_decompose(t, f, lam, exact=True)
    assert check_cz_invariants(t, f, cz) == []
    assert cz.report["b_l1_ratio"] <= 2.0 + 1e-12
