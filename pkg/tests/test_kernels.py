import itertools
import os

import numpy as np
import pytest

from dyadiclab import _fallback, _kernels

try:
    from dyadiclab import _core
except ImportError:  # pragma: no cover
    _core = None

impls = [_fallback] + ([_core] if _core is not None else [])
ids = [m.__name__.rsplit(".", 1)[-1] for m in impls]


def _ro(a):
    a = np.array(a)
    a.setflags(write=False)
    return a


@pytest.mark.parametrize("impl", impls, ids=ids)
def test_pair_opnorms_matches_svd(impl):
    rng = np.random.default_rng(0)
    A, B = rng.normal(size=(5, 3, 3)), rng.normal(size=(4, 3, 3))
    want = np.array([[np.linalg.norm(a @ b, 2) for b in B] for a in A])
    assert np.allclose(impl.pair_opnorms(_ro(A), _ro(B)), want, rtol=1e-9)


@pytest.mark.parametrize("impl", impls, ids=ids)
def test_expanding_sum_brute_force(impl):
    a = np.random.default_rng(1).random(6)
    pre = np.cumsum(a)
    for m in (0, 1, 2, 3):
        want = (m + 1) * sum(
            np.prod(a[list(t)]) * pre[min(t) if t else len(a) - 1] ** 1.7
            for t in itertools.product(range(len(a)), repeat=m))
        assert impl.expanding_sum_rhs(_ro(a), m, 1.7) == pytest.approx(want, rel=1e-10)


@pytest.mark.parametrize("impl", impls, ids=ids)
def test_fujii_wilson_constant_weight_is_one(impl):
    mu = np.random.default_rng(2).random(64) + 0.1
    out = impl.fujii_wilson(_ro(np.full(64, 2.5)), _ro(mu), 1, 6)
    for lv in out:
        assert np.allclose(lv, 1.0)


@pytest.mark.skipif(_core is None, reason="compiled core not built")
def test_core_agrees_with_fallback():
    rng = np.random.default_rng(3)
    w = np.exp(rng.normal(size=(3, 64)))
    mu = rng.random(64) + 0.05
    for x, y in zip(_core.fujii_wilson(w, mu, 2, 3), _fallback.fujii_wilson(w, mu, 2, 3)):
        assert np.allclose(x, y, rtol=1e-12)
    A, B = rng.normal(size=(7, 2, 2)), rng.normal(size=(7, 2, 2))
    assert np.allclose(_core.pair_opnorms(A, B), _fallback.pair_opnorms(A, B), rtol=1e-10)
    a = rng.random(9)
    assert _core.expanding_sum_rhs(a, 3, 0.5) == pytest.approx(_fallback.expanding_sum_rhs(a, 3, 0.5), rel=1e-12)


def test_backend_reported():
    assert _kernels.BACKEND in ("cython", "python")
    if _core is not None and os.environ.get("DYADICLAB_PURE", "") not in ("1", "true", "yes"):
        assert _kernels.BACKEND == "cython"
