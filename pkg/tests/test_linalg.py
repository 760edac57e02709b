import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from koopspec import linalg
from koopspec.linalg import LinAlgError

import oracles

# Frozen from tests/oracles.py (characteristic polynomial + bisection, triple-loop products).
SEED5_SINGULAR_VALUES = [2.1789549018151755, 0.79787776242318, 0.18863133354554418]
SEED3_SYM_EIGENVALUES = [-1.3407481880451737, -0.8119710485137648, 0.9269069964457517, 2.88611983440187]
SEED11_PRODUCT = [
    [0.5955526428869091, 0.027083862852344265],
    [0.47551151699144234, -0.35737428700797524],
    [2.514857222091186, -1.3409106301772586],
]


def test_matmul_matches_frozen_product():
    rng = np.random.default_rng(11)
    A, B = rng.standard_normal((3, 4)), rng.standard_normal((4, 2))
    np.testing.assert_allclose(linalg.matmul(A, B), SEED11_PRODUCT, rtol=0, atol=1e-13)


@settings(max_examples=30, deadline=None)
@given(st.integers(1, 5), st.integers(1, 5), st.integers(1, 5), st.integers(0, 2**32 - 1))
def test_matmul_matches_triple_loop(n, k, m, seed):
    rng = np.random.default_rng(seed)
    A, B = rng.standard_normal((n, k)), rng.standard_normal((k, m))
    np.testing.assert_allclose(linalg.matmul(A, B), oracles.matmul(A.tolist(), B.tolist()), atol=1e-12)


def test_matmul_shape_mismatch():
    with pytest.raises(LinAlgError, match="mismatch"):
        linalg.matmul(np.ones((2, 3)), np.ones((2, 3)))


def test_singular_values_frozen():
    A = np.random.default_rng(5).standard_normal((3, 3))
    np.testing.assert_allclose(linalg.singular_values(A), SEED5_SINGULAR_VALUES, rtol=1e-12)


def test_sym_max_eig_frozen():
    S = np.random.default_rng(3).standard_normal((4, 4))
    S = 0.5 * (S + S.T)
    assert linalg.sym_max_eig(S) == pytest.approx(SEED3_SYM_EIGENVALUES[-1], rel=1e-12)


def test_sym_max_eig_rejects_asymmetric():
    with pytest.raises(LinAlgError, match="symmetric"):
        linalg.sym_max_eig(np.array([[1.0, 2.0], [0.0, 1.0]]))


def test_qr_orthonormal_and_sign_convention():
    A = np.random.default_rng(0).standard_normal((6, 3))
    Q = linalg.qr_orthonormalize(A)
    np.testing.assert_allclose(Q.T @ Q, np.eye(3), atol=1e-14)
    R = Q.T @ A
    assert np.all(np.diag(R) > 0)
    np.testing.assert_allclose(np.tril(R, -1), 0, atol=1e-13)
    # idempotent on orthonormal input
    np.testing.assert_allclose(linalg.qr_orthonormalize(Q), Q, atol=1e-14)


def test_qr_rank_deficient_raises():
    A = np.ones((4, 2))
    with pytest.raises(LinAlgError, match="rank-deficient"):
        linalg.qr_orthonormalize(A)


def test_qr_wide_raises():
    with pytest.raises(LinAlgError):
        linalg.qr_orthonormalize(np.ones((2, 3)))


def test_non_finite_rejected():
    with pytest.raises(LinAlgError, match="non-finite"):
        linalg.singular_values(np.array([[np.nan, 0.0], [0.0, 1.0]]))


def test_spectral_radius_diagonal_and_rotation():
    assert linalg.spectral_radius_estimate(np.diag([0.5, -2.0, 1.0])) == pytest.approx(2.0, rel=1e-12)
    th = 0.3
    R = 0.9 * np.array([[np.cos(th), -np.sin(th)], [np.sin(th), np.cos(th)]])
    assert linalg.spectral_radius_estimate(R) == pytest.approx(0.9, rel=1e-12)


def test_spectral_radius_bounded_by_norm_for_nonnormal():
    A = np.array([[0.5, 10.0], [0.0, 0.5]])
    est = linalg.spectral_radius_estimate(A, 64)
    assert 0.5 <= est <= linalg.spectral_norm(A)
    # converges towards rho = 0.5 from above as k grows
    assert linalg.spectral_radius_estimate(A, 256) < est


def test_spectral_radius_no_overflow():
    assert linalg.spectral_radius_estimate(1e3 * np.eye(3), 64) == pytest.approx(1e3, rel=1e-12)
    assert linalg.spectral_radius_estimate(1e-3 * np.eye(3), 64) == pytest.approx(1e-3, rel=1e-12)
    assert linalg.spectral_radius_estimate(np.zeros((2, 2))) == 0.0


@settings(max_examples=20, deadline=None)
@given(st.integers(1, 4), st.integers(0, 2**32 - 1))
def test_singular_values_match_oracle(n, seed):
    A = np.random.default_rng(seed).standard_normal((n, n))
    ref = oracles.singular_values(A.tolist())
    np.testing.assert_allclose(linalg.singular_values(A), ref, rtol=1e-7, atol=1e-7)
