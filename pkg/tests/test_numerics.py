import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from kernel_mor.errors import NotPositiveDefiniteError, NotSymmetricError
from kernel_mor.numerics import (ToleranceConfig, jittered_cholesky, pinv, psd_sqrt, psd_sqrt_pair,
                                 reduced_svd)

from conftest import random_psd


def test_tolerance_defaults():
    tol = ToleranceConfig()
    assert (tol.pinv_rtol, tol.psd_clip, tol.jitter) == (1e-10, 0.0, 1e-3)


def test_tolerance_rejects_negative():
    with pytest.raises(ValueError):
        ToleranceConfig(jitter=-1.0)


def test_psd_sqrt_identity():
    np.testing.assert_allclose(psd_sqrt(np.eye(3)), np.eye(3), atol=1e-15)


def test_psd_sqrt_diag():
    np.testing.assert_allclose(psd_sqrt(np.diag([4.0, 1.0])), np.diag([2.0, 1.0]), atol=1e-15)


def test_psd_sqrt_reconstruction(rng):
    A = random_psd(rng, 8)
    S = psd_sqrt(A)
    assert np.linalg.norm(S @ S - A) / np.linalg.norm(A) <= 1e-8
    np.testing.assert_allclose(S, S.T, atol=1e-12 * np.linalg.norm(S))


def test_psd_sqrt_clips_negative_eigenvalues():
    A = np.diag([4.0, -1e-12])
    np.testing.assert_allclose(psd_sqrt(A), np.diag([2.0, 0.0]), atol=1e-15)


def test_psd_sqrt_projector(rng):
    Q, _ = np.linalg.qr(rng.standard_normal((5, 2)))
    P = Q @ Q.T
    np.testing.assert_allclose(psd_sqrt(P), P, atol=1e-12)


def test_psd_sqrt_rejects_asymmetric():
    with pytest.raises(NotSymmetricError):
        psd_sqrt(np.array([[1.0, 1.0], [0.0, 1.0]]))


def test_psd_sqrt_pair_inverse_on_range(rng):
    A = random_psd(rng, 6, rank=3)
    S, Sp = psd_sqrt_pair(A)
    np.testing.assert_allclose(S @ Sp @ S, S, atol=1e-8 * np.linalg.norm(S))
    np.testing.assert_allclose(Sp @ S @ Sp, Sp, atol=1e-8 * np.linalg.norm(Sp))


def test_pinv_rank_deficient_diag():
    np.testing.assert_array_equal(pinv(np.diag([2.0, 0.0])), np.diag([0.5, 0.0]))


def test_pinv_identity():
    np.testing.assert_allclose(pinv(np.eye(4)), np.eye(4), atol=1e-15)


@settings(max_examples=40, deadline=None)
@given(st.integers(1, 6), st.integers(1, 6), st.integers(0, 2**32 - 1))
def test_pinv_penrose_identities(r, c, seed):
    A = np.random.default_rng(seed).standard_normal((r, c))
    P = pinv(A)
    scale = np.linalg.norm(A)
    assert np.linalg.norm(A @ P @ A - A) <= 1e-8 * scale
    assert np.linalg.norm(P @ A @ P - P) <= 1e-8 * np.linalg.norm(P)
    assert np.linalg.norm((A @ P).T - A @ P) <= 1e-8 * np.linalg.norm(A @ P)


def test_pinv_involution_full_rank(rng):
    A = rng.standard_normal((5, 5)) + 5 * np.eye(5)
    assert np.linalg.norm(pinv(pinv(A)) - A) <= 1e-8 * np.linalg.norm(A)


def test_cholesky_identity_jitter():
    L = jittered_cholesky(np.eye(3), ToleranceConfig(jitter=1e-3))
    np.testing.assert_allclose(L, np.sqrt(1.001) * np.eye(3), rtol=1e-15)


def test_cholesky_zero_scalar():
    L = jittered_cholesky(np.zeros((1, 1)), ToleranceConfig(jitter=1e-3))
    np.testing.assert_allclose(L, [[np.sqrt(1e-3)]], rtol=1e-15)


def test_cholesky_reconstruction(rng):
    A = random_psd(rng, 7)
    L = jittered_cholesky(A)
    assert np.allclose(L, np.tril(L))
    assert np.linalg.norm(L @ L.T - (A + 1e-3 * np.eye(7))) <= 1e-10 * np.linalg.norm(A)


def test_cholesky_failure_reports_eigenvalue():
    with pytest.raises(NotPositiveDefiniteError) as exc:
        jittered_cholesky(np.diag([1.0, -1.0]), ToleranceConfig(jitter=1e-3))
    assert exc.value.min_eigenvalue == pytest.approx(-0.999)


def test_reduced_svd_examples(rng):
    _, s, _ = reduced_svd(np.eye(3))
    np.testing.assert_array_equal(s, np.ones(3))
    _, s, _ = reduced_svd(np.diag([1.0, 3.0, 2.0]))
    np.testing.assert_allclose(s, [3.0, 2.0, 1.0])
    A = rng.standard_normal((6, 4))
    U, s, V = reduced_svd(A)
    assert np.all(np.diff(s) <= 0)
    np.testing.assert_allclose(U.T @ U, np.eye(4), atol=1e-10)
    np.testing.assert_allclose(V.T @ V, np.eye(4), atol=1e-10)
    np.testing.assert_allclose(U * s @ V.T, A, atol=1e-10)
