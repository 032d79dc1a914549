import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from clutterem.errors import DomainError, InvalidInputError, SingularMatrixError
from clutterem.numerics import (cholesky, hermitian_eig, inverse_cholesky, is_hermitian,
                                logdet_and_solve, psd_sqrt, psd_sqrt_pair)

from conftest import random_pd


class TestHermitianEig:
    def test_identity(self):
        w, U = hermitian_eig(np.eye(3))
        assert np.allclose(w, 1.0)
        assert np.allclose(U.conj().T @ U, np.eye(3), atol=1e-10)

    def test_diagonal_sorted_descending(self):
        w, U = hermitian_eig(np.diag([2.0, 5.0]))
        assert np.allclose(w, [5.0, 2.0])
        assert np.allclose(np.abs(U), [[0, 1], [1, 0]])

    def test_two_by_two(self):
        w, U = hermitian_eig(np.array([[2.0, 1.0], [1.0, 2.0]]))
        assert np.allclose(w, [3.0, 1.0])
        s = 1 / np.sqrt(2)
        assert np.allclose(np.abs(U[:, 0]), [s, s])
        assert np.isclose(abs(U[:, 1] @ np.array([s, -s])), 1.0)

    def test_reconstruction(self, rng):
        for n in (1, 3, 8):
            H = random_pd(rng, n) - 2.0 * np.eye(n)    # indefinite is fine here
            w, U = hermitian_eig(H)
            R = (U * w) @ U.conj().T
            assert np.linalg.norm(R - H) <= 1e-9 * np.linalg.norm(H)
            assert np.all(np.diff(w) <= 0)

    def test_batched(self, rng):
        H = np.stack([random_pd(rng, 4) for _ in range(5)])
        w, U = hermitian_eig(H)
        assert w.shape == (5, 4) and U.shape == (5, 4, 4)
        assert np.allclose(U @ (w[..., None] * np.conj(np.swapaxes(U, -1, -2))), H)

    def test_rejects_non_finite(self):
        with pytest.raises(InvalidInputError):
            hermitian_eig(np.array([[1.0, np.nan], [np.nan, 1.0]]))


class TestPsdSqrt:
    def test_identity(self):
        assert np.allclose(psd_sqrt(np.eye(4)), np.eye(4))

    def test_diagonal(self):
        assert np.allclose(psd_sqrt(np.diag([4.0, 9.0])), np.diag([2.0, 3.0]))

    def test_random_accuracy(self, rng):
        H = random_pd(rng, 3)
        R = psd_sqrt(H)
        assert is_hermitian(R)
        assert np.linalg.norm(R @ R - H) / np.linalg.norm(H) < 1e-9

    def test_rank_one_projector_is_fixed(self, rng):
        x = rng.standard_normal(5) + 1j * rng.standard_normal(5)
        P = np.outer(x, x.conj()) / np.vdot(x, x).real
        assert np.allclose(psd_sqrt(P), P, atol=1e-7)

    def test_indefinite_raises(self):
        with pytest.raises(DomainError):
            psd_sqrt(np.diag([1.0, -1.0]))

    def test_tiny_negative_eigenvalue_clamped(self):
        R = psd_sqrt(np.diag([1.0, -1e-12]))
        assert np.allclose(R, np.diag([1.0, 0.0]))

    def test_pair_is_inverse(self, rng):
        H = random_pd(rng, 4)
        root, inv_root = psd_sqrt_pair(H)
        assert np.allclose(root @ inv_root, np.eye(4), atol=1e-9)


class TestLogdetSolve:
    def test_identity(self):
        e1 = np.zeros(5)
        e1[0] = 1
        ld, x = logdet_and_solve(np.eye(5), e1)
        assert ld == pytest.approx(0.0)
        assert np.allclose(x, e1)

    def test_scaled_identity(self):
        ld, X = logdet_and_solve(2 * np.eye(2), np.eye(2))
        assert ld == pytest.approx(2 * np.log(2))
        assert np.allclose(X, 0.5 * np.eye(2))

    def test_against_explicit_inverse(self, rng):
        H = random_pd(rng, 3)
        B = rng.standard_normal((3, 2)) + 1j * rng.standard_normal((3, 2))
        ld, X = logdet_and_solve(H, B)
        assert np.allclose(X, np.linalg.inv(H) @ B, rtol=1e-9, atol=1e-12)
        assert np.linalg.norm(H @ X - B) <= 1e-9 * np.linalg.norm(B)
        assert ld == pytest.approx(np.sum(np.log(np.linalg.eigvalsh(H))), rel=1e-12)

    def test_block_diagonal_additivity(self, rng):
        A, B = random_pd(rng, 2), random_pd(rng, 3)
        full = np.zeros((5, 5), complex)
        full[:2, :2], full[2:, 2:] = A, B
        ld = lambda H: logdet_and_solve(H, np.eye(len(H)))[0]
        assert ld(full) == pytest.approx(ld(A) + ld(B), rel=1e-12)

    def test_singular_reports_pivot(self):
        H = np.array([[1.0, 0.0, 0.0], [0.0, -1.0, 0.0], [0.0, 0.0, 1.0]])
        with pytest.raises(SingularMatrixError) as info:
            logdet_and_solve(H, np.eye(3))
        assert info.value.pivot == 2

    def test_semidefinite_is_loaded(self):
        # rank-deficient PSD: loading makes it factorizable
        x = np.array([1.0, 1.0])
        C = cholesky(np.outer(x, x))
        assert np.all(np.isfinite(C))


def test_inverse_cholesky_whitens(rng):
    H = random_pd(rng, 4)
    ld, Ci = inverse_cholesky(H)
    assert np.allclose(Ci @ H @ Ci.conj().T, np.eye(4), atol=1e-10)


@settings(max_examples=30, deadline=None)
@given(st.integers(1, 6), st.integers(0, 2 ** 32 - 1))
def test_sqrt_square_roundtrip(n, seed):
    H = random_pd(np.random.default_rng(seed), n, cond=1e3)
    R = psd_sqrt(H)
    assert np.linalg.norm(R @ R - H) <= 1e-9 * np.linalg.norm(H)
