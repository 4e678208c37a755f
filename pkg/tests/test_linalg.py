"""
稀疏分解與 Dirichlet 消去測試
"""

from concurrent.futures import ThreadPoolExecutor

import numpy as np
import pytest
import scipy.sparse as sp

from src.linalg import (
    ConstraintConflictError, DirichletLifting, Factorization, FactorizationError,
    IterativeFactorization, eliminate_dirichlet, factorization_count, factorize, solve,
)


def laplacian_1d(n: int) -> sp.csr_matrix:
    return sp.diags([-np.ones(n - 1), 2.0 * np.ones(n), -np.ones(n - 1)], [-1, 0, 1], format='csr')


class TestFactorize:

    def test_solve_matches_dense(self):
        A = laplacian_1d(30) + sp.eye(30) * 0.1
        b = np.arange(30, dtype=float)
        fact = factorize(A)
        assert isinstance(fact, Factorization)
        np.testing.assert_allclose(fact.solve(b, check=True), np.linalg.solve(A.toarray(), b), rtol=1e-10)
        np.testing.assert_allclose(solve(fact, b), fact.solve(b))

    def test_complex_rhs_with_real_matrix(self):
        A = laplacian_1d(12) + sp.eye(12)
        b = np.linspace(0, 1, 12) + 1j * np.linspace(1, 2, 12)
        x = factorize(A).solve(b)
        np.testing.assert_allclose(A @ x, b, atol=1e-12)

    def test_counter_increments(self):
        before = factorization_count()
        factorize(laplacian_1d(5))
        factorize(laplacian_1d(6))
        assert factorization_count() == before + 2

    def test_zero_row_reports_pivot(self):
        A = laplacian_1d(6).tolil()
        A[3, :] = 0.0
        with pytest.raises(FactorizationError) as info:
            factorize(A.tocsr())
        assert info.value.pivot == 3

    def test_singular_matrix(self):
        # 純 Neumann Laplacian：常數向量在零空間中
        A = laplacian_1d(8).tolil()
        A[0, 0] = 1.0
        A[7, 7] = 1.0
        with pytest.raises(FactorizationError):
            factorize(A.tocsr())

    def test_non_square(self):
        with pytest.raises(ValueError):
            factorize(sp.csr_matrix(np.ones((2, 3))))

    def test_rhs_length_checked(self):
        with pytest.raises(ValueError):
            factorize(laplacian_1d(4)).solve(np.ones(5))

    def test_iterative_fallback(self):
        A = laplacian_1d(40) + sp.eye(40)
        b = np.sin(np.arange(40.0))
        fact = factorize(A, memory_budget_mb=1e-9, symmetric=True)
        assert isinstance(fact, IterativeFactorization)
        np.testing.assert_allclose(fact.solve(b, check=True), np.linalg.solve(A.toarray(), b), rtol=1e-8)

    def test_concurrent_solves(self):
        A = laplacian_1d(50) + sp.eye(50)
        fact = factorize(A)
        rhs = [np.random.default_rng(k).standard_normal(50) for k in range(8)]
        with ThreadPoolExecutor(max_workers=4) as pool:
            results = list(pool.map(fact.solve, rhs))
        for b, x in zip(rhs, results):
            np.testing.assert_allclose(A @ x, b, atol=1e-10)


class TestDirichlet:

    def test_elimination_matches_reduced_solve(self):
        n = 10
        A = laplacian_1d(n)
        b = np.ones(n)
        dofs = np.array([0, n - 1])
        values = np.array([1.0, 2.0])
        K, rhs = eliminate_dirichlet(A, b, dofs, values)
        x = factorize(K).solve(rhs)
        np.testing.assert_allclose(x[dofs], values)
        interior = np.arange(1, n - 1)
        np.testing.assert_allclose((A @ x)[interior], b[interior], atol=1e-12)
        # 對稱性保持
        assert abs(K - K.T).max() < 1e-15

    def test_duplicate_consistent_values(self):
        K, rhs = eliminate_dirichlet(laplacian_1d(4), np.zeros(4), [0, 0, 3], [1.0, 1.0, 0.0])
        assert rhs[0] == 1.0

    def test_conflicting_values(self):
        with pytest.raises(ConstraintConflictError):
            eliminate_dirichlet(laplacian_1d(4), np.zeros(4), [1, 1], [0.0, 1.0])

    def test_out_of_range(self):
        with pytest.raises(IndexError):
            DirichletLifting(laplacian_1d(4), [7])

    def test_lifting_reused_with_new_values(self):
        A = laplacian_1d(6)
        lifting = DirichletLifting(A, [0, 5])
        fact = factorize(lifting.matrix)
        for value in (0.0, 1.0, -3.0):
            x = fact.solve(lifting.apply(np.zeros(6), np.array([value, value])))
            np.testing.assert_allclose(x, value, atol=1e-12)

    def test_values_follow_given_dof_order(self):
        A = laplacian_1d(6)
        lifting = DirichletLifting(A, [5, 0])
        x = factorize(lifting.matrix).solve(lifting.apply(np.zeros(6), np.array([2.0, 1.0])))
        assert x[0] == pytest.approx(1.0)
        assert x[5] == pytest.approx(2.0)
        np.testing.assert_allclose(x, np.linspace(1.0, 2.0, 6), atol=1e-12)

    def test_value_count_mismatch(self):
        lifting = DirichletLifting(laplacian_1d(4), [0, 3])
        with pytest.raises(ValueError):
            lifting.apply(np.zeros(4), np.array([1.0]))

    def test_no_constraints(self):
        A = laplacian_1d(3)
        lifting = DirichletLifting(A, [])
        np.testing.assert_array_equal(lifting.apply(np.ones(3), np.array([])), np.ones(3))
        assert abs(lifting.matrix - A).max() == 0
