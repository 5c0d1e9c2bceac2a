import numpy as np
import pytest

from kaczmimo.exceptions import NotHermitian, NotPositiveDefinite, ShapeMismatch
from kaczmimo.numerics import cholesky_lower, eigh_hermitian, frobenius_sq, gram, min_eig_hermitian, solve_hpd

from conftest import cn, random_hpd


def _negative_pivots(S):
    # inertia by plain Gaussian elimination: number of eigenvalues below 0
    A = np.array(S, dtype=complex)
    n = A.shape[0]
    count = 0
    for k in range(n):
        piv = A[k, k].real
        if piv < 0:
            count += 1
        A[k + 1:, k + 1:] -= np.outer(A[k + 1:, k], A[k, k + 1:]) / piv
    return count


def _bisect_min_eig(S, tol=1e-13):
    bound = np.sqrt(np.sum(np.abs(S) ** 2)) + 1.0
    lo, hi = -bound, bound
    while hi - lo > tol * bound:
        mid = 0.5 * (lo + hi)
        if _negative_pivots(S - mid * np.eye(S.shape[0])) >= 1:
            hi = mid
        else:
            lo = mid
    return 0.5 * (lo + hi)


class TestGram:
    def test_identity(self):
        np.testing.assert_array_equal(gram(np.eye(2)), np.eye(2))

    def test_column(self):
        np.testing.assert_allclose(gram(np.array([[1], [1j]])), [[2]])

    def test_brute_force(self, rng):
        A = cn(rng, 4, 3)
        G = np.zeros((3, 3), dtype=complex)
        for i in range(3):
            for j in range(3):
                for k in range(4):
                    G[i, j] += np.conj(A[k, i]) * A[k, j]
        np.testing.assert_allclose(gram(A), G, atol=1e-14)

    def test_hermitian(self, rng):
        G = gram(cn(rng, 7, 5))
        assert np.array_equal(G, G.conj().T)

    def test_rejects_nonfinite(self):
        with pytest.raises(ValueError):
            gram([[np.nan, 1.0]])

    def test_rejects_vector(self):
        with pytest.raises(ShapeMismatch):
            gram([1.0, 2.0])


class TestSolveHpd:
    def test_identity(self):
        np.testing.assert_allclose(solve_hpd(np.eye(3), [1, 2, 3]), [1, 2, 3])

    def test_diagonal(self):
        np.testing.assert_allclose(solve_hpd(np.diag([2.0, 4.0]), [2, 4]), [1, 1])

    def test_residual(self, rng):
        S = random_hpd(rng, 5)
        b = cn(rng, 5)
        x = solve_hpd(S, b)
        assert np.linalg.norm(S @ x - b) <= 1e-10 * np.linalg.norm(b)

    def test_matrix_rhs(self, rng):
        S = random_hpd(rng, 4)
        X = solve_hpd(S, np.eye(4))
        np.testing.assert_allclose(S @ X, np.eye(4), atol=1e-12)

    @pytest.mark.parametrize("cond", [1e2, 1e4, 1e6])
    def test_recovery_up_to_cond_1e6(self, rng, cond):
        S = random_hpd(rng, 8, cond)
        x = cn(rng, 8)
        err = np.linalg.norm(solve_hpd(S, S @ x) - x) / np.linalg.norm(x)
        assert err <= 1e-9

    def test_not_positive_definite(self):
        with pytest.raises(NotPositiveDefinite):
            solve_hpd(np.diag([1.0, 0.0]), [1, 1])
        with pytest.raises(NotPositiveDefinite):
            cholesky_lower(np.diag([1.0, -2.0]))

    def test_cholesky_factor(self, rng):
        S = random_hpd(rng, 6)
        L = cholesky_lower(S)
        np.testing.assert_allclose(L @ L.conj().T, S, atol=1e-12)
        assert np.allclose(np.triu(L, 1), 0)


class TestMinEig:
    def test_diagonal(self):
        assert min_eig_hermitian(np.diag([1.0, 2.0])) == pytest.approx(1.0, abs=1e-14)

    def test_two_by_two(self):
        assert min_eig_hermitian(np.array([[2.0, 1.0], [1.0, 2.0]])) == pytest.approx(1.0, abs=1e-14)

    def test_bisection_oracle(self, rng):
        A = cn(rng, 6, 6)
        S = A + A.conj().T
        ref = _bisect_min_eig(S)
        assert abs(min_eig_hermitian(S) - ref) <= 1e-10 * np.linalg.norm(S)

    def test_full_decomposition(self, rng):
        A = cn(rng, 9, 9)
        S = A + A.conj().T
        w, V = eigh_hermitian(S)
        assert np.all(np.diff(w) >= 0)
        np.testing.assert_allclose(V.conj().T @ V, np.eye(9), atol=1e-12)
        np.testing.assert_allclose(S @ V, V * w, atol=1e-11)

    def test_warm_start(self, rng):
        A = cn(rng, 6, 6)
        S = A + A.conj().T
        w, V = eigh_hermitian(S)
        E = 1e-3 * (cn(rng, 6, 6))
        S2 = S + E + E.conj().T
        w2, _ = eigh_hermitian(S2, V0=V)
        np.testing.assert_allclose(w2, eigh_hermitian(S2)[0], atol=1e-12)

    def test_shift_invariance(self, rng):
        A = cn(rng, 7, 7)
        S = A + A.conj().T
        for c in (-3.5, 0.25, 10.0):
            assert min_eig_hermitian(S + c * np.eye(7)) == pytest.approx(min_eig_hermitian(S) + c, abs=1e-9)

    def test_not_hermitian(self):
        with pytest.raises(NotHermitian):
            min_eig_hermitian(np.array([[1.0, 1.0], [0.0, 1.0]]))

    def test_not_square(self):
        with pytest.raises(ShapeMismatch):
            min_eig_hermitian(np.ones((2, 3)))


class TestFrobenius:
    def test_identity(self):
        assert frobenius_sq(np.eye(5)) == 5.0

    def test_zero(self):
        assert frobenius_sq(np.zeros((3, 2))) == 0.0

    def test_two_summation_orders(self, rng):
        A = cn(rng, 3, 3)
        rows = sum(np.vdot(A[i], A[i]).real for i in range(3))
        cols = sum(np.vdot(A[:, j], A[:, j]).real for j in range(3))
        assert frobenius_sq(A) == pytest.approx(rows, rel=1e-14)
        assert frobenius_sq(A) == pytest.approx(cols, rel=1e-14)

    def test_trace_of_gram(self, rng):
        A = cn(rng, 6, 4)
        assert frobenius_sq(A) == pytest.approx(np.trace(gram(A)).real, rel=1e-12)
