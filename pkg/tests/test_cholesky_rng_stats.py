import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from cmcds.mc_engine import CholeskyError, RunningMoments, batch_generator, batch_slices, cholesky


def flat_corr(n, rho):
    q = np.full((n, n), rho)
    np.fill_diagonal(q, 1.0)
    return q


def test_identity():
    np.testing.assert_array_equal(cholesky(np.eye(5)), np.eye(5))


def test_two_by_two_closed_form():
    np.testing.assert_allclose(cholesky(flat_corr(2, 0.9)), [[1, 0], [0.9, np.sqrt(0.19)]], atol=1e-15)


def test_nearly_singular_flat_matrix():
    q = flat_corr(41, 0.99)
    eig = np.linalg.eigvalsh(q)
    assert eig.min() == pytest.approx(0.01) and eig.max() == pytest.approx(1 + 40 * 0.99)
    c = cholesky(q)
    np.testing.assert_allclose(c @ c.T, q, atol=1e-10)
    assert np.allclose(c, np.tril(c))


def test_semidefinite_completion():
    q = flat_corr(4, 1.0)
    c = cholesky(q)
    np.testing.assert_allclose(c @ c.T, q, atol=1e-10)
    assert np.count_nonzero(np.abs(np.diag(c)) > 0) == 1


def test_indefinite_rejected():
    q = np.array([[1, 0.9, -0.9], [0.9, 1, 0.9], [-0.9, 0.9, 1]])
    with pytest.raises(CholeskyError):
        cholesky(q)


def test_input_checks():
    with pytest.raises(ValueError):
        cholesky([[1, 0.5], [0.4, 1]])
    with pytest.raises(ValueError):
        cholesky([[2, 0], [0, 1]])
    with pytest.raises(ValueError):
        cholesky([[1, np.inf], [np.inf, 1]])


@st.composite
def correlation_matrices(draw):
    n = draw(st.integers(1, 8))
    k = draw(st.integers(1, n))
    entries = st.floats(-1, 1, allow_subnormal=False)
    a = np.array(draw(st.lists(entries, min_size=n * k, max_size=n * k))).reshape(n, k)
    a[np.linalg.norm(a, axis=1) < 1e-3, 0] = 1.0
    a /= np.linalg.norm(a, axis=1, keepdims=True)
    q = a @ a.T
    q = 0.5 * (q + q.T)
    np.fill_diagonal(q, 1.0)
    return q


@settings(max_examples=200, deadline=None)
@given(correlation_matrices())
def test_factor_reproduces_matrix(q):
    try:
        c = cholesky(q, tol=1e-10)
    except CholeskyError:
        # rounding can push a rank-deficient matrix slightly indefinite
        assert np.linalg.eigvalsh(q).min() > -1e-8 and np.linalg.matrix_rank(q, tol=1e-6) < len(q)
        return
    np.testing.assert_allclose(c @ c.T, q, atol=1e-10)


def test_streams_are_reproducible_and_distinct():
    a = batch_generator(7, 3).standard_normal(1000)
    b = batch_generator(7, 3).standard_normal(1000)
    c = batch_generator(7, 4).standard_normal(1000)
    d = batch_generator(7, 3, stream=1).standard_normal(1000)
    np.testing.assert_array_equal(a, b)
    assert not np.array_equal(a, c) and not np.array_equal(a, d)
    with pytest.raises(ValueError):
        batch_generator(-1, 0)


def test_batch_slices_cover_paths():
    assert list(batch_slices(25, 10)) == [(0, 0, 10), (1, 10, 20), (2, 20, 25)]


@settings(max_examples=50, deadline=None)
@given(st.lists(st.integers(1, 40), min_size=1, max_size=6), st.integers(0, 2**31))
def test_merged_moments_match_direct(sizes, seed):
    x = np.random.default_rng(seed).normal(3.0, 2.0, size=(sum(sizes), 3))
    m = RunningMoments((3,))
    start = 0
    for s in sizes:
        m.update(x[start : start + s])
        start += s
    np.testing.assert_allclose(m.mean, x.mean(axis=0), rtol=1e-12)
    if len(x) > 1:
        np.testing.assert_allclose(m.variance, x.var(axis=0, ddof=1), rtol=1e-10)
    assert m.count == len(x)


def test_constant_samples_have_zero_spread():
    m = RunningMoments()
    for _ in range(3):
        m.update(np.full(1000, 0.013948077494017715))
    assert m.mean == 0.013948077494017715
    assert m.stderr == 0.0
