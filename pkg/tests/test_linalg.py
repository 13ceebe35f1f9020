import numpy as np
import pytest

from softgossip.errors import ArgumentError
from softgossip.linalg import eigen_max, jacobi_eigh


def test_diagonal_matrix_is_immediate():
    values, vectors = jacobi_eigh(np.diag([3.0, -1.0, 2.0]))
    assert np.allclose(sorted(values), [-1.0, 2.0, 3.0])
    assert np.allclose(vectors, np.eye(3))


def test_two_by_two_hand_case():
    # [[2, 1], [1, 2]] has eigenvalues 1 and 3.
    lam, v = eigen_max(np.array([[2.0, 1.0], [1.0, 2.0]]))
    assert abs(lam - 3.0) < 1e-12
    assert np.allclose(np.abs(v), np.array([1.0, 1.0]) / np.sqrt(2), atol=1e-12)
    assert v[0] > 0  # deterministic sign convention


def test_matches_lapack_on_random_symmetric():
    rng = np.random.default_rng(42)
    for n in [2, 3, 5, 8, 16, 33]:
        m = rng.normal(size=(n, n))
        m = m + m.T
        values, vectors = jacobi_eigh(m)
        ref = np.linalg.eigvalsh(m)
        assert np.allclose(np.sort(values), ref, atol=1e-9 * max(1, abs(ref).max()))
        # eigenpair property and orthonormality
        assert np.allclose(m @ vectors, vectors @ np.diag(values), atol=1e-9)
        assert np.allclose(vectors.T @ vectors, np.eye(n), atol=1e-12)


def test_eigen_max_residual_and_determinism():
    rng = np.random.default_rng(1)
    m = rng.normal(size=(12, 12))
    m = m + m.T
    lam1, v1 = eigen_max(m)
    lam2, v2 = eigen_max(m.copy())
    assert lam1 == lam2
    assert np.array_equal(v1, v2)
    assert np.linalg.norm(m @ v1 - lam1 * v1) <= 1e-10 * max(1.0, np.linalg.norm(m))


def test_repeated_eigenvalues():
    # Identity: every direction is an eigenvector; eigenvalues all 1.
    values, vectors = jacobi_eigh(np.eye(5))
    assert np.allclose(values, 1.0)
    assert np.allclose(vectors, np.eye(5))


def test_asymmetric_input_rejected():
    with pytest.raises(ArgumentError):
        jacobi_eigh(np.array([[1.0, 2.0], [0.5, 1.0]]))


def test_tiny_asymmetry_tolerated():
    m = np.array([[1.0, 0.5], [0.5 + 1e-13, 1.0]])
    values, _ = jacobi_eigh(m)
    assert np.allclose(sorted(values), [0.5, 1.5], atol=1e-10)


def test_non_finite_rejected():
    with pytest.raises(ArgumentError):
        jacobi_eigh(np.array([[np.nan, 0.0], [0.0, 1.0]]))
