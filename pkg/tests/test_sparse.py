import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from dyadiclab import sparse as sp
from dyadiclab.dyadic import MeasuredTree, MeasurePreset, build_tree, random_masses
from dyadiclab.haar import build_haar
from dyadiclab.shifts import (MartingaleMultiplier, apply_shift, haar_multiplier, is_L1_normalized,
                              l1_normalize, random_shift, zero_shift)
from dyadiclab.suite import load_curated, random_vector_function


def test_disjoint_family():
    t = build_tree(1, 4)
    rep = sp.verify_sparseness(sp.family(t, [(2, 0), (2, 1), (3, 7)]))
    assert rep.eta == 1.0 and rep.lam == 1.0


def test_full_tree_packing():
    for L in (2, 4, 6):
        t = build_tree(1, L)
        S = sp.family(t, [(lv, k) for lv in range(L + 1) for k in range(t.count(lv))])
        assert sp.verify_sparseness(S).lam == pytest.approx(L + 1)


def test_disjoint_sets_realize_eta():
    t = MeasuredTree(1, 4, random_masses(1, 4, np.random.default_rng(0)))
    S = sp.family(t, [(0, 0), (1, 0), (2, 1), (4, 3)])
    eta = sp.verify_sparseness(S).eta
    E = sp.disjoint_sets(S, eta)
    claimed = np.zeros(t.nleaves)
    for (lv, k), take in E.items():
        a, b = t.leaf_range(t.cube(lv, k))
        claimed[a:b] += take
        assert take.sum() == pytest.approx(eta * t.mu[lv][k])
    assert np.all(claimed <= t.leaf_masses * (1 + 1e-12))
    with pytest.raises(ValueError):
        sp.disjoint_sets(S, min(1.0, eta * 1.5))


def test_form_examples():
    t = build_tree(1, 3)
    S = sp.family(t, [t.root])
    v = np.tile([0.6, 0.8], (8, 1))
    assert sp.sparse_form(S, v, v) == pytest.approx(1.0)
    f = np.tile([1.0, 0.0], (8, 1))
    g = np.tile([0.0, 1.0], (8, 1))
    assert sp.sparse_form(S, f, g) == 0.0
    hs = build_haar(t)
    assert sp.modified_sparse_form(S, 0, hs, f, g) == 0.0
    assert sp.modified_sparse_form(S, 0, hs, v, v) == pytest.approx(hs.m_of(t.root))
    ok, lhs, rhs = sp.pointwise_form_check(S, v, v)
    assert ok and lhs == pytest.approx(rhs)
    ok, lhs, _ = sp.pointwise_form_check(S, v, np.zeros_like(v))
    assert ok and lhs == 0.0


def test_zero_shift_certificate():
    t = build_tree(1, 5)
    hs = build_haar(t)
    f = random_vector_function(t, np.random.default_rng(0), 2)
    S, cert = sp.build_sparse_balanced(zero_shift(hs, 0, 1), f, C=1.0)
    assert cert.passed
    assert sp.enlarge(sp.family(t, [t.root]), 1).cubes <= S.cubes
    _, cert = sp.build_sparse_L1(zero_shift(hs), f, C=1.0)
    assert cert.passed


def test_hilbert_style_shift_lebesgue():
    t = build_tree(1, 6)
    hs = build_haar(t)
    T = random_shift(hs, 0, 1, np.random.default_rng(1), kind="signs")
    x = np.linspace(0, 1, t.nleaves)
    f = np.c_[np.sin(2 * np.pi * x), np.cos(2 * np.pi * x)]
    S, cert = sp.build_sparse_balanced(T, f)
    assert cert.passed and cert.max_fraction <= 0.5


def test_multiplier_l1_on_any_measure():
    t = build_tree(1, 6, MeasurePreset("cantor-like", {"eps": 0.05}))
    hs = build_haar(t)
    T = haar_multiplier(hs)
    f = random_vector_function(t, np.random.default_rng(2), 2)
    _, cert = sp.build_sparse_L1(T, f)
    assert cert.passed
    assert is_L1_normalized(haar_multiplier(build_haar(build_tree(1, 6))), 1.0).verdict


def test_l1_shift_on_exponential_measure():
    t = build_tree(1, 6, MeasurePreset("exponential-imbalanced", {"ratio": 3.0}))
    T = l1_normalize(random_shift(build_haar(t), 1, 0, np.random.default_rng(3)))
    f = random_vector_function(t, np.random.default_rng(4), 2)
    _, cert = sp.build_sparse_L1(T, f)
    assert cert.passed and cert.mode == "plain"


def test_multiplier_constructions():
    t = build_tree(1, 5)
    S, cert = sp.build_sparse_multiplier(MartingaleMultiplier.constant(t), np.ones((t.nleaves, 2)))
    assert cert.passed
    rng = np.random.default_rng(5)
    S, cert = sp.build_sparse_multiplier(MartingaleMultiplier.random(t, rng), random_vector_function(t, rng, 2))
    assert cert.passed and sp.verify_sparseness(S).eta >= 0.5
    t2 = build_tree(1, 6, MeasurePreset("cantor-like", {"eps": 0.01}))
    _, cert = sp.build_sparse_multiplier(MartingaleMultiplier.random(t2, rng), random_vector_function(t2, rng, 3))
    assert cert.passed


def test_curated_instances_need_modified_term():
    cur = load_curated()
    assert len(cur) >= 3
    for name, tree, T, f in cur:
        S, cert = sp.build_sparse_balanced(T, f)
        assert cert.passed, name
        plain = sp.check_domination(S, f, apply_shift(T, f), 10 * cert.C, cert.q0, "plain")
        assert not np.all(plain[0]), name


@settings(max_examples=15, deadline=None)
@given(st.integers(0, 2 ** 31), st.integers(0, 1), st.integers(0, 1))
def test_balanced_certificates_self_certify(seed, s, t):
    rng = np.random.default_rng(seed)
    tree = build_tree(1, 5, MeasurePreset("random-balanced", {}, seed % 1000))
    T = random_shift(build_haar(tree), s, t, rng)
    f = random_vector_function(tree, rng, 2)
    S, cert = sp.build_sparse_balanced(T, f)
    assert cert.passed
    assert cert.max_fraction <= 0.5
    assert cert.decomposition_error <= 1e-9 * (1 + np.abs(apply_shift(T, f)).max())


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2 ** 31), st.integers(0, 2))
def test_enlargement_packing_bound(seed, t):
    rng = np.random.default_rng(seed)
    tree = MeasuredTree(1, 5, random_masses(1, 5, rng))
    cubes = {(int(lv), int(rng.integers(tree.count(lv)))) for lv in rng.integers(0, 6, size=6)}
    S = sp.family(tree, cubes)
    E = sp.enlarge(S, t)
    lam, lam_e = sp.verify_sparseness(S).lam, sp.verify_sparseness(E).lam
    assert S.cubes <= E.cubes
    assert lam_e <= (t + 1) * 2 ** t * (lam + 1)


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2 ** 31))
def test_pointwise_to_form(seed):
    rng = np.random.default_rng(seed)
    tree = MeasuredTree(1, 4, random_masses(1, 4, rng))
    cubes = {(int(lv), int(rng.integers(tree.count(lv)))) for lv in rng.integers(0, 5, size=5)}
    d = int(rng.integers(1, 4))
    ok, _, _ = sp.pointwise_form_check(sp.family(tree, cubes), rng.normal(size=(16, d)), rng.normal(size=(16, d)))
    assert ok
