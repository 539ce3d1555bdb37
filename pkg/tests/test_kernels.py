import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from gptrust.errors import InputError
from gptrust.kernels import (
    RBF,
    Linear,
    LocallyPeriodic,
    Periodic,
    Product,
    Sum,
    eval_cross,
    eval_gram_grads,
    eval_kernel,
    pack,
    param_layout,
    parse_kernel,
    unpack,
)

from oracles import central_difference, random_kernel, ref_gram, ref_k


def test_rbf_zero_distance_is_signal_variance():
    assert eval_kernel(RBF(1.0, 1.0), 0.3, 0.3) == 1.0


def test_rbf_unit_distance():
    assert eval_kernel(RBF(1.0, 1.0), 0.0, 1.0) == pytest.approx(math.exp(-0.5), rel=1e-15)
    assert eval_kernel(RBF(1.0, 1.0), 0.0, 1.0) == pytest.approx(0.6065307, abs=1e-7)


def test_locper_at_whole_period_reduces_to_envelope():
    k = LocallyPeriodic(var=1.0, period=1.0, len=1.0)
    assert k.plen == 1.0
    assert eval_kernel(k, 0.0, 1.0) == pytest.approx(0.6065307, abs=1e-7)


def test_locper_uses_squared_sine():
    # half a period: sin^2 = 1, unsquared sine would give the same; 1.5 periods separates them
    k = LocallyPeriodic(var=1.0, period=1.0, len=100.0, plen=1.0)
    expected = math.exp(-2.0) * math.exp(-(1.5**2) / (2 * 100.0**2))
    assert eval_kernel(k, 0.0, 1.5) == pytest.approx(expected, rel=1e-14)


def test_linear_form():
    assert eval_kernel(Linear(2.0, 1.0), [3.0, 2.0], [0.0, 5.0]) == pytest.approx(2.0 * (2 * -1 + 1 * 4))


def test_eval_kernel_dimension_mismatch():
    with pytest.raises(InputError):
        eval_kernel(RBF(), [0.0, 1.0], [0.0])


def test_cross_examples():
    np.testing.assert_array_equal(eval_cross(RBF(2.5, 1.0), [0.7], [0.7]), [[2.5]])
    np.testing.assert_allclose(eval_cross(RBF(), [0.0], [0.0, 1.0]), [[1.0, math.exp(-0.5)]], rtol=1e-15)
    assert eval_cross(Sum((RBF(1, 1), RBF(2, 1))), [0.0], [0.0])[0, 0] == 3.0


def test_cross_empty_side():
    assert eval_cross(RBF(), np.zeros((0, 1)), [[0.0], [1.0]]).shape == (0, 2)
    assert eval_cross(RBF(), [[0.0]], np.zeros((0, 1))).shape == (1, 0)


def test_cross_matches_scalar_reference():
    rng = np.random.default_rng(3)
    for _ in range(30):
        k = random_kernel(rng)
        A, B = rng.normal(size=(4, 2)), rng.normal(size=(3, 2))
        np.testing.assert_allclose(eval_cross(k, A, B), ref_gram(k, A, B), rtol=1e-12, atol=1e-14)


def test_rbf_variance_gradient_is_gram():
    X = np.array([[0.0], [0.4], [1.3]])
    k = RBF(1.7, 0.6)
    np.testing.assert_array_equal(eval_gram_grads(k, X)[0], k(X))


def test_rbf_length_gradient_hand_value():
    g = eval_gram_grads(RBF(1.0, 1.0), [[0.0], [1.0]])[1]
    assert g[0, 1] == pytest.approx(math.exp(-0.5), rel=1e-14)
    assert g[0, 0] == 0.0


def test_gradients_match_central_differences():
    rng = np.random.default_rng(11)
    for _ in range(40):
        k = random_kernel(rng)
        X = rng.normal(size=(int(rng.integers(2, 7)), int(rng.integers(1, 4))))
        theta = pack(k, 1.0)[:-1]

        grads = eval_gram_grads(k, X)
        assert len(grads) == theta.size
        for i, g in enumerate(grads):
            np.testing.assert_array_equal(g, g.T)
            up, down = theta.copy(), theta.copy()
            h = 1e-6
            up[i] += h
            down[i] -= h
            fd = (k.with_params(np.exp(up))(X) - k.with_params(np.exp(down))(X)) / (2 * h)
            err = np.abs(g - fd) / np.maximum(np.abs(fd), 1e-3)
            assert err.max() <= 1e-5, (str(k), i, err.max())


def test_gradient_helper_scalar():
    # the shared finite-difference oracle agrees with a known derivative
    np.testing.assert_allclose(central_difference(lambda t: np.exp(t[0]) * t[1], [0.3, 2.0]),
                               [np.exp(0.3) * 2.0, np.exp(0.3)], rtol=1e-8)


finite = st.floats(-5, 5, allow_nan=False)


@settings(max_examples=60, deadline=None)
@given(seed=st.integers(0, 2**31), x=st.lists(finite, min_size=2, max_size=2), x2=st.lists(finite, min_size=2, max_size=2))
def test_symmetry_exact(seed, x, x2):
    k = random_kernel(np.random.default_rng(seed))
    assert eval_kernel(k, x, x2) == eval_kernel(k, x2, x)


@settings(max_examples=60, deadline=None)
@given(seed=st.integers(0, 2**31), x=st.lists(finite, min_size=2, max_size=2),
       x2=st.lists(finite, min_size=2, max_size=2), shift=st.lists(finite, min_size=2, max_size=2))
def test_stationary_kernels_shift_invariant(seed, x, x2, shift):
    k = random_kernel(np.random.default_rng(seed), linear=False)
    moved = eval_kernel(k, np.add(x, shift), np.add(x2, shift))
    assert moved == pytest.approx(eval_kernel(k, x, x2), abs=1e-12)


@settings(max_examples=60, deadline=None)
@given(seed=st.integers(0, 2**31), x=st.lists(finite, min_size=3, max_size=3), x2=st.lists(finite, min_size=3, max_size=3))
def test_cauchy_schwarz(seed, x, x2):
    k = random_kernel(np.random.default_rng(seed))
    bound = math.sqrt(eval_kernel(k, x, x) * eval_kernel(k, x2, x2))
    assert abs(eval_kernel(k, x, x2)) <= bound + 1e-12


def test_gram_psd_with_tiny_jitter():
    rng = np.random.default_rng(5)
    for _ in range(100):
        k = random_kernel(rng)
        X = rng.uniform(-3, 3, size=(int(rng.integers(1, 31)), int(rng.integers(1, 4))))
        K = k(X)
        np.testing.assert_array_equal(K, K.T)
        jitter = 1e-9 * np.max(np.diag(K))
        np.linalg.cholesky(K + jitter * np.eye(len(K)))


def test_diag_matches_cross():
    rng = np.random.default_rng(8)
    for _ in range(20):
        k = random_kernel(rng)
        X = rng.normal(size=(5, 2))
        np.testing.assert_allclose(k.diag(X), np.diag(k(X)), rtol=1e-14)


@pytest.mark.parametrize("expr, expected", [
    ("rbf(var=1.0, len=0.5)", RBF(1.0, 0.5)),
    ("  locper( var = 1, period=24, len=48, plen=1 )", LocallyPeriodic(1.0, 24.0, 48.0, 1.0)),
    ("sum(rbf(var=2, len=1), linear(var=0.1, offset=3))", Sum((RBF(2, 1), Linear(0.1, 3)))),
    ("prod(periodic(var=1, period=2, len=1),\n rbf())", Product((Periodic(1, 2, 1), RBF()))),
])
def test_parse(expr, expected):
    assert parse_kernel(expr) == expected


@pytest.mark.parametrize("expr", [
    "rbf(1.0, 0.5)", "rbf(var=-1)", "rbf(var=0)", "sum(rbf())", "cosine(var=1)",
    "rbf(var='a')", "rbf(var=1", "rbf(bogus=1)", "sum(rbf(), var=1)",
])
def test_parse_rejects(expr):
    with pytest.raises(InputError):
        parse_kernel(expr)


def test_expression_round_trip_is_exact():
    rng = np.random.default_rng(21)
    for _ in range(50):
        k = random_kernel(rng)
        assert parse_kernel(str(k)) == k


def test_pack_unpack_round_trip():
    rng = np.random.default_rng(4)
    for _ in range(50):
        k = random_kernel(rng)
        noise = float(rng.uniform(0.01, 1.0))
        theta = pack(k, noise)
        assert len(param_layout(k)) == theta.size
        k2, noise2 = unpack(k, theta)
        np.testing.assert_array_max_ulp(np.array([v for _, v in k2.params()] + [noise2]),
                                        np.array([v for _, v in k.params()] + [noise]), maxulp=4)
        assert np.all(np.exp(theta) > 0)
        np.testing.assert_array_max_ulp(pack(k2, noise2), theta, maxulp=4)


def test_layout_labels():
    k = Sum((RBF(), LocallyPeriodic()))
    assert param_layout(k) == ["0/rbf.var", "0/rbf.len", "1/locper.var", "1/locper.period",
                               "1/locper.len", "1/locper.plen", "noise_var"]
