import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from kcal.errors import ValidationError
from kcal.kernel import KernelSpec, log_kernel_weights, pairwise_sq_dist


def test_three_four_five():
    np.testing.assert_array_equal(
        pairwise_sq_dist(np.array([[0.0, 0.0]]), np.array([[3.0, 4.0]])), [[25.0]]
    )


def test_identical_rows_exact_zero():
    a = np.array([[1.0, 2.0]])
    out = pairwise_sq_dist(a, a)
    assert out[0, 0] == 0.0


def test_matches_naive_double_loop():
    rng = np.random.default_rng(5)
    a = rng.standard_normal((5, 3))
    b = rng.standard_normal((4, 3))
    naive = np.empty((5, 4))
    for i in range(5):
        for j in range(4):
            naive[i, j] = sum((a[i, c] - b[j, c]) ** 2 for c in range(3))
    out = pairwise_sq_dist(a, b)
    np.testing.assert_allclose(out, naive, rtol=1e-10)


def test_dimension_mismatch():
    with pytest.raises(ValidationError):
        pairwise_sq_dist(np.ones((2, 3)), np.ones((2, 4)))


def test_chunked_path_matches_direct():
    import kcal.kernel as kernel_mod

    rng = np.random.default_rng(1)
    a = rng.standard_normal((37, 4))
    b = rng.standard_normal((23, 4))
    full = pairwise_sq_dist(a, b)
    original = kernel_mod._CHUNK_ELEMENTS
    try:
        kernel_mod._CHUNK_ELEMENTS = 50  # force many small chunks
        chunked = pairwise_sq_dist(a, b)
    finally:
        kernel_mod._CHUNK_ELEMENTS = original
    np.testing.assert_array_equal(full, chunked)


def test_fast_path_consistent_with_exact():
    from kcal.kernel import pairwise_sq_dist_fast

    rng = np.random.default_rng(4)
    for _ in range(10):
        a = rng.standard_normal((30, 3)) * rng.uniform(0.1, 20)
        b = rng.standard_normal((17, 3)) * rng.uniform(0.1, 20)
        exact = pairwise_sq_dist(a, b)
        fast = pairwise_sq_dist_fast(a, b)
        assert fast.min() >= 0
        np.testing.assert_allclose(fast, exact, rtol=1e-9, atol=1e-9)


def test_log_weights_values():
    spec1 = KernelSpec(1.0)
    assert log_kernel_weights(np.array([[0.0]]), spec1)[0, 0] == 0.0
    assert log_kernel_weights(np.array([[2.0]]), spec1)[0, 0] == -1.0
    assert log_kernel_weights(np.array([[8.0]]), KernelSpec(2.0))[0, 0] == -1.0


def test_bandwidth_must_be_positive():
    with pytest.raises(ValidationError):
        KernelSpec(0.0)
    with pytest.raises(ValidationError):
        KernelSpec(-1.0)
    with pytest.raises(ValidationError):
        KernelSpec(np.inf)


def test_negative_sq_dist_rejected():
    with pytest.raises(ValidationError):
        log_kernel_weights(np.array([[-0.5]]), KernelSpec(1.0))


@settings(deadline=None, max_examples=40)
@given(
    st.integers(1, 8),
    st.integers(1, 8),
    st.integers(1, 4),
    st.floats(0.1, 10.0),
    st.floats(0.1, 10.0),
    st.integers(0, 2**31 - 1),
)
def test_bandwidth_scale_fold_equivalence(p, q, d, scale, b0, seed):
    """Scaling points and bandwidth together leaves log-weights unchanged."""
    rng = np.random.default_rng(seed)
    a = rng.standard_normal((p, d))
    b = rng.standard_normal((q, d))
    base = log_kernel_weights(pairwise_sq_dist(a, b), KernelSpec(b0))
    scaled = log_kernel_weights(
        pairwise_sq_dist(scale * a, scale * b), KernelSpec(scale * b0)
    )
    np.testing.assert_allclose(scaled, base, rtol=1e-9, atol=1e-12)


def test_monotone_decreasing_in_sq_dist():
    sq = np.linspace(0, 50, 200)[None, :]
    weights = log_kernel_weights(sq, KernelSpec(1.7))
    assert np.all(np.diff(weights[0]) < 0)


@settings(deadline=None, max_examples=25)
@given(st.integers(1, 6), st.integers(1, 6), st.integers(1, 3), st.integers(0, 10_000))
def test_weight_symmetry(p, q, d, seed):
    rng = np.random.default_rng(seed)
    a = rng.standard_normal((p, d))
    b = rng.standard_normal((q, d))
    spec = KernelSpec(0.9)
    ab = log_kernel_weights(pairwise_sq_dist(a, b), spec)
    ba = log_kernel_weights(pairwise_sq_dist(b, a), spec)
    np.testing.assert_allclose(ab, ba.T, rtol=1e-12, atol=0)
