import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from luba import _backend
from luba._pykernels import _log_emf

pytestmark = pytest.mark.skipif(_backend.compiled is None, reason="compiled kernels not built")
C = _backend.compiled
P = _backend.python

prob_vectors = st.lists(st.floats(min_value=0.0, max_value=1.0), min_size=2, max_size=40).filter(
    lambda v: sum(v) > 1e-3)


def test_selected_backend():
    assert _backend.kernels is C and _backend.BACKEND == "cython"


@pytest.mark.parametrize("lam", [0.01, 1.0, 37.0, 1e4])
def test_recurrence_infinite(lam):
    a = C.recurrence_infinite(lam, 1e-12, 10**6)
    b = P.recurrence_infinite(lam, 1e-12, 10**6)
    assert len(a[0]) == len(b[0])
    np.testing.assert_allclose(a[0], b[0], rtol=1e-13)
    assert a[1] == pytest.approx(b[1], rel=1e-10)
    assert a[2] == b[2]


@pytest.mark.parametrize("f1,v", [(2.4, 100), (0.5, 3), (8.0, 40)])
def test_recurrence_finite(f1, v):
    np.testing.assert_allclose(C.recurrence_finite(f1, v, 10**6), P.recurrence_finite(f1, v, 10**6),
                               rtol=1e-13)


@settings(max_examples=100, deadline=None)
@given(prob_vectors, st.floats(min_value=0.1, max_value=500))
def test_potential_win(p, lam):
    f = lam * np.asarray(p) / sum(p)
    ca, na = C.potential_win(f, f.size + 3)
    cb, nb = P.potential_win(f, f.size + 3)
    np.testing.assert_allclose(ca, cb, rtol=1e-12, atol=1e-300)
    assert na == pytest.approx(nb, rel=1e-12, abs=1e-300)


def test_potential_win_empty():
    for mod in (C, P):
        c, none = mod.potential_win(np.zeros(0), 0)
        assert c.size == 0 and none == 1.0


@settings(max_examples=50, deadline=None)
@given(prob_vectors, st.floats(min_value=0.5, max_value=200))
def test_replicator(p, lam):
    p = np.asarray(p) / sum(p)
    np.testing.assert_allclose(C.replicator_rhs(p, lam), P.replicator_rhs(p, lam), atol=1e-15)
    target = np.full(p.size, 1.0 / p.size)
    a = C.replicator_advance(p, lam, 0.05, 40, target, 1e-12, 2, -1e-6)
    b = P.replicator_advance(p, lam, 0.05, 40, target, 1e-12, 2, -1e-6)
    np.testing.assert_allclose(a[0], b[0], atol=1e-12)
    assert a[1:3] == b[1:3]


def test_lowest_unique(rng):
    counts = rng.integers(0, 3, size=(2000, 12)).astype(np.int64)
    np.testing.assert_array_equal(C.lowest_unique(counts), P.lowest_unique(counts))


def test_sample_distinct_bit_identical(rng):
    w = rng.random(25)
    w[[3, 7]] = 0.0
    u = rng.random((5000, 6))
    np.testing.assert_array_equal(C.sample_distinct(w, u), P.sample_distinct(w, u))


def test_log_emf_small_argument():
    x = np.array([1e-20, 1e-8, 0.3, 0.49, 0.51, 2.0])
    want = np.log(np.exp(x.astype(np.longdouble)) - x.astype(np.longdouble)).astype(float)
    got = np.array([_log_emf(v) for v in x])
    np.testing.assert_allclose(got[2:], want[2:], rtol=1e-13)
    np.testing.assert_allclose(got[:2], x[:2] ** 2 / 2, rtol=1e-6)
