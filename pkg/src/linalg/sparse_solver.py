"""
稀疏線性系統求解

功能包括：
- SuperLU 分解（COLAMD 排序），分解一次、重複求解
- 奇異主元偵測並回報主元位置
- 超出記憶體預算時改用 Jacobi 前置條件的 Krylov 迭代（BiCGStab / CG）
- 對稱的 Dirichlet 消去與右端項提升
"""

import threading
from typing import Optional, Tuple, Union

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla
from loguru import logger

DEFAULT_RTOL = 1e-10


class FactorizationError(RuntimeError):
    """矩陣數值奇異或迭代求解失敗"""

    def __init__(self, message: str, pivot: Optional[int] = None):
        super().__init__(message if pivot is None else f"{message}（主元 {pivot}）")
        self.pivot = pivot


class ConstraintConflictError(ValueError):
    """同一自由度被指定了不同的 Dirichlet 值"""


_factorization_count = 0
_count_lock = threading.Lock()


def factorization_count() -> int:
    """目前為止執行過的分解次數"""
    return _factorization_count


def _bump_counter() -> None:
    global _factorization_count
    with _count_lock:
        _factorization_count += 1


def _split_solve(solve_fn, rhs: np.ndarray, real_matrix: bool) -> np.ndarray:
    if real_matrix and np.iscomplexobj(rhs):
        return solve_fn(np.ascontiguousarray(rhs.real)) + 1j * solve_fn(np.ascontiguousarray(rhs.imag))
    return solve_fn(rhs)


class Factorization:
    """可重複使用的 LU 分解；多執行緒同時求解是安全的"""

    def __init__(self, matrix: sp.csr_matrix, lu):
        self.matrix = matrix
        self.shape = matrix.shape
        self._lu = lu
        self._lock = threading.Lock()
        self.is_complex = np.iscomplexobj(matrix.data)

    def _solve_real(self, rhs: np.ndarray) -> np.ndarray:
        with self._lock:
            return self._lu.solve(rhs)

    def solve(self, rhs: np.ndarray, check: bool = False) -> np.ndarray:
        """
        求解 A x = b

        Args:
            rhs: 右端項（可為複數）
            check: 是否驗證相對殘差 ≤ 1e-10
        """
        rhs = np.asarray(rhs)
        if rhs.shape[0] != self.shape[0]:
            raise ValueError(f"右端項長度 {rhs.shape[0]} 與矩陣大小 {self.shape[0]} 不符")
        x = _split_solve(self._solve_real, rhs, not self.is_complex)
        if check:
            verify_residual(self.matrix, x, rhs)
        return x


class IterativeFactorization:
    """與 Factorization 相同介面的 Krylov 求解器"""

    def __init__(self, matrix: sp.csr_matrix, symmetric: bool = False, rtol: float = DEFAULT_RTOL):
        self.matrix = matrix
        self.shape = matrix.shape
        self.symmetric = symmetric
        self.rtol = rtol
        self.is_complex = np.iscomplexobj(matrix.data)
        diag = matrix.diagonal()
        inv = np.where(np.abs(diag) > 0, 1.0 / np.where(diag == 0, 1.0, diag), 1.0)
        self._preconditioner = spla.LinearOperator(matrix.shape, matvec=lambda v: inv * v, dtype=matrix.dtype)

    def _solve_real(self, rhs: np.ndarray) -> np.ndarray:
        if not np.any(rhs):
            return np.zeros_like(rhs)
        method = spla.cg if self.symmetric else spla.bicgstab
        x, info = method(self.matrix, rhs, rtol=self.rtol, atol=0.0, M=self._preconditioner,
                         maxiter=20 * self.shape[0])
        if info != 0:
            raise FactorizationError(f"{method.__name__} 未收斂 (info={info})")
        return x

    def solve(self, rhs: np.ndarray, check: bool = False) -> np.ndarray:
        rhs = np.asarray(rhs)
        if rhs.shape[0] != self.shape[0]:
            raise ValueError(f"右端項長度 {rhs.shape[0]} 與矩陣大小 {self.shape[0]} 不符")
        x = _split_solve(self._solve_real, rhs, not self.is_complex)
        if check:
            verify_residual(self.matrix, x, rhs, tol=10 * self.rtol)
        return x


def verify_residual(matrix: sp.spmatrix, x: np.ndarray, rhs: np.ndarray, tol: float = DEFAULT_RTOL) -> float:
    """相對殘差 ‖Ax − b‖/‖b‖，超過門檻時拋出例外"""
    norm_b = np.linalg.norm(rhs)
    residual = np.linalg.norm(matrix @ x - rhs) / (norm_b if norm_b > 0 else 1.0)
    if residual > tol:
        raise FactorizationError(f"相對殘差 {residual:.3e} 超過 {tol:.1e}")
    return float(residual)


def estimate_lu_memory_mb(matrix: sp.spmatrix) -> float:
    """LU 填充的粗略估計：nnz · max(8, n^{1/3}) 個非零元素"""
    n = matrix.shape[0]
    fill = matrix.nnz * max(8.0, n ** (1.0 / 3.0))
    bytes_per = 16 if np.iscomplexobj(matrix.data) else 8
    return fill * (bytes_per + 4) / 2 ** 20


def factorize(matrix: sp.spmatrix, memory_budget_mb: Optional[float] = None,
              symmetric: bool = False) -> Union[Factorization, IterativeFactorization]:
    """
    分解方陣；超出記憶體預算時回傳迭代求解器

    Raises:
        FactorizationError: 矩陣數值奇異
    """
    matrix = sp.csr_matrix(matrix)
    if matrix.shape[0] != matrix.shape[1]:
        raise ValueError(f"矩陣必須為方陣: {matrix.shape}")
    n = matrix.shape[0]

    row_nnz = np.diff(matrix.indptr)
    abs_rows = np.asarray(abs(matrix).sum(axis=1)).ravel()
    zero_rows = np.flatnonzero((row_nnz == 0) | (abs_rows == 0))
    if zero_rows.size:
        raise FactorizationError("矩陣含有零列", pivot=int(zero_rows[0]))

    if memory_budget_mb is not None:
        estimate = estimate_lu_memory_mb(matrix)
        if estimate > memory_budget_mb:
            logger.warning(f"預估 LU 記憶體 {estimate:.0f} MB 超過預算 {memory_budget_mb:.0f} MB，改用迭代求解")
            return IterativeFactorization(matrix, symmetric=symmetric)

    try:
        lu = spla.splu(matrix.tocsc(), permc_spec='COLAMD')
    except RuntimeError as e:
        raise FactorizationError(f"LU 分解失敗: {e}") from e

    diag = np.abs(lu.U.diagonal())
    scale = diag.max() if diag.size else 1.0
    small = np.flatnonzero(diag <= 1e-14 * scale)
    if small.size:
        raise FactorizationError("矩陣數值奇異", pivot=int(lu.perm_c[small[0]]))

    _bump_counter()
    logger.debug(f"LU 分解完成: n={n}, nnz(A)={matrix.nnz}, nnz(L+U)={lu.L.nnz + lu.U.nnz}")
    return Factorization(matrix, lu)


def solve(fact: Union[Factorization, IterativeFactorization], rhs: np.ndarray) -> np.ndarray:
    """以既有分解求解"""
    return fact.solve(rhs)


# ============================================================================
# Dirichlet 條件
# ============================================================================

def _merge_constraints(dofs: np.ndarray, values: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    dofs = np.asarray(dofs, dtype=np.int64).ravel()
    values = np.asarray(values).ravel()
    if dofs.size == 0:
        return dofs, values
    order = np.argsort(dofs, kind='stable')
    dofs, values = dofs[order], values[order]
    same = dofs[1:] == dofs[:-1]
    if np.any(same & ~np.isclose(values[1:], values[:-1], rtol=0.0, atol=1e-14)):
        bad = int(dofs[1:][same & ~np.isclose(values[1:], values[:-1], rtol=0.0, atol=1e-14)][0])
        raise ConstraintConflictError(f"自由度 {bad} 有互相衝突的 Dirichlet 值")
    keep = np.concatenate([[True], ~same])
    return dofs[keep], values[keep]


class DirichletLifting:
    """
    固定受限自由度集合的對稱消去

    矩陣部分只建構一次；每一步只需以新的邊界值提升右端項。
    """

    def __init__(self, matrix: sp.spmatrix, dofs: np.ndarray):
        matrix = sp.csr_matrix(matrix)
        n = matrix.shape[0]
        dofs = np.asarray(dofs, dtype=np.int64).ravel()
        self.dofs, self._order = np.unique(dofs, return_index=True)
        self.n_given = dofs.size
        if self.dofs.size and (self.dofs.min() < 0 or self.dofs.max() >= n):
            raise IndexError("Dirichlet 自由度超出範圍")
        keep = np.ones(n, dtype=bool)
        keep[self.dofs] = False
        D = sp.diags(keep.astype(float))
        reduced = D @ matrix @ D + sp.diags((~keep).astype(float))
        reduced = sp.csr_matrix(reduced)
        reduced.eliminate_zeros()
        reduced.sort_indices()
        self.matrix = reduced
        self._columns = sp.csr_matrix(matrix[:, self.dofs])
        self._keep = keep

    def apply(self, rhs: np.ndarray, values: np.ndarray) -> np.ndarray:
        """
        回傳提升後的右端項

        values 依建構時傳入的 dofs 順序排列；重複的自由度取第一次出現的值。
        """
        values = np.asarray(values)
        if values.shape[0] != self.n_given:
            raise ValueError(f"Dirichlet 值的數量 {values.shape[0]} 與自由度數量 {self.n_given} 不符")
        values = values[self._order]
        out = np.array(rhs, dtype=np.result_type(rhs, values, float), copy=True)
        if self.dofs.size == 0:
            return out
        out -= self._columns @ values
        out[self.dofs] = values
        return out


def eliminate_dirichlet(matrix: sp.spmatrix, rhs: np.ndarray, dofs: np.ndarray,
                        values: np.ndarray) -> Tuple[sp.csr_matrix, np.ndarray]:
    """
    對稱消去 Dirichlet 條件

    受限列與行清零、對角為 1，已知值乘上對應行後自右端項移除。

    Raises:
        ConstraintConflictError: 同一自由度有不同的指定值
    """
    dofs, values = _merge_constraints(dofs, values)
    lifting = DirichletLifting(matrix, dofs)
    return lifting.matrix, lifting.apply(rhs, values)
