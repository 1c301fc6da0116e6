import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from flowembed.errors import PreconditionError
from flowembed.kernel import make_kernel, renormalize_truncated

import oracle


def test_box_one():
    assert np.allclose(make_kernel("box", 1).weights, [1 / 3] * 3)


def test_zero_length():
    for shape in ("box", "gaussian", "forward", "backward"):
        assert np.array_equal(make_kernel(shape, 0).weights, [1.0])


def test_gaussian_two():
    raw = np.exp([-4.5, -1.125, 0.0, -1.125, -4.5])
    assert raw.sum() == pytest.approx(1.671523, abs=1e-6)
    assert raw.sum() == pytest.approx(1.67175, abs=5e-4)
    k = make_kernel("gaussian", 2)
    assert np.allclose(k.weights, raw / raw.sum(), rtol=1e-14)
    assert k.weight(0) == pytest.approx(1 / raw.sum())


def test_one_sided():
    assert np.allclose(make_kernel("forward", 2).weights, [0, 0, 1 / 3, 1 / 3, 1 / 3])
    assert np.allclose(make_kernel("backward", 2).weights, [1 / 3, 1 / 3, 1 / 3, 0, 0])


def test_bad_arguments():
    with pytest.raises(PreconditionError):
        make_kernel("triangle", 2)
    with pytest.raises(PreconditionError):
        make_kernel("box", -1)
    with pytest.raises(PreconditionError):
        make_kernel("box", 1.5)


def test_truncation():
    k = make_kernel("box", 1)
    assert np.allclose(renormalize_truncated(k, {0, 1}).weights, [0, 0.5, 0.5])
    k2 = make_kernel("box", 2)
    assert renormalize_truncated(k2, range(-2, 3)) is k2
    g = make_kernel("gaussian", 2)
    raw = np.exp([-1.125, 0.0, -1.125])
    assert np.allclose(renormalize_truncated(g, {-1, 0, 1}).weights, np.r_[0, raw / raw.sum(), 0])


def test_truncation_errors():
    k = make_kernel("box", 2)
    with pytest.raises(PreconditionError):
        renormalize_truncated(k, [])
    with pytest.raises(PreconditionError):
        renormalize_truncated(k, [1, 2])
    with pytest.raises(PreconditionError):
        renormalize_truncated(k, [0, 3])


def test_weights_read_only():
    k = make_kernel("box", 3)
    with pytest.raises(ValueError):
        k.weights[0] = 1.0


@given(shape=st.sampled_from(["box", "gaussian", "forward", "backward"]), L=st.integers(0, 200))
def test_normalized_and_matches_oracle(shape, L):
    w = make_kernel(shape, L).weights
    assert w.size == 2 * L + 1
    assert np.all(w >= 0)
    assert math.isclose(w.sum(), 1.0, rel_tol=1e-12)
    assert np.allclose(w, oracle.kernel_weights(shape, L), rtol=1e-12, atol=0)
    if shape in ("box", "gaussian"):
        assert np.array_equal(w, w[::-1])


@given(L=st.integers(1, 30), data=st.data())
def test_truncation_sums_to_one(L, data):
    lo = data.draw(st.integers(-L, 0))
    hi = data.draw(st.integers(0, L))
    k = renormalize_truncated(make_kernel("gaussian", L), range(lo, hi + 1))
    assert math.isclose(k.weights.sum(), 1.0, rel_tol=1e-12)
    assert np.all(k.weights[: lo + L] == 0) and np.all(k.weights[hi + L + 1 :] == 0)
