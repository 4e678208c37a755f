"""
單純形上的求積規則

以 Stroud 錐形積（collapsed coordinates）組合 Gauss–Jacobi 與 Gauss–Legendre
節點，對任意精確度建構三角形與四面體規則。
"""

from dataclasses import dataclass
from functools import lru_cache
from math import ceil, factorial

import numpy as np
from scipy.special import roots_jacobi, roots_legendre


@dataclass(frozen=True, eq=False)
class QuadratureRule:
    """參考單純形上的求積規則"""
    points: np.ndarray
    weights: np.ndarray
    degree: int

    @property
    def dim(self) -> int:
        return self.points.shape[1]

    @property
    def n_points(self) -> int:
        return len(self.weights)

    @property
    def barycentric(self) -> np.ndarray:
        """重心座標 (Q, d+1)"""
        return np.column_stack([1.0 - self.points.sum(axis=1), self.points])

    @property
    def reference_volume(self) -> float:
        return 1.0 / factorial(self.dim)


def _n_points(degree: int) -> int:
    return max(int(ceil((degree + 1) / 2.0)), 1)


def _unit_gauss_jacobi(n: int, alpha: float):
    """[0,1] 上權重 (1 − u)^α 的 Gauss–Jacobi 節點"""
    s, w = roots_jacobi(n, alpha, 0.0)
    return 0.5 * (1.0 + s), w / 2.0 ** (alpha + 1.0)


@lru_cache(maxsize=None)
def gauss_legendre(degree: int) -> QuadratureRule:
    """[0,1] 上的 Gauss–Legendre 規則"""
    s, w = roots_legendre(_n_points(degree))
    return QuadratureRule(points=(0.5 * (s + 1.0))[:, None], weights=0.5 * w, degree=degree)


@lru_cache(maxsize=None)
def triangle_rule(degree: int) -> QuadratureRule:
    """參考三角形 {x, y ≥ 0, x + y ≤ 1} 上的規則"""
    n = _n_points(degree)
    u, wu = _unit_gauss_jacobi(n, 1.0)
    v, wv = _unit_gauss_jacobi(n, 0.0)
    U, V = np.meshgrid(u, v, indexing='ij')
    W = np.outer(wu, wv)
    points = np.column_stack([U.ravel(), (V * (1.0 - U)).ravel()])
    return QuadratureRule(points=points, weights=W.ravel(), degree=degree)


@lru_cache(maxsize=None)
def tetrahedron_rule(degree: int) -> QuadratureRule:
    """參考四面體上的規則"""
    n = _n_points(degree)
    u, wu = _unit_gauss_jacobi(n, 2.0)
    v, wv = _unit_gauss_jacobi(n, 1.0)
    w, ww = _unit_gauss_jacobi(n, 0.0)
    U, V, Wc = np.meshgrid(u, v, w, indexing='ij')
    weights = np.einsum('i,j,k->ijk', wu, wv, ww).ravel()
    points = np.column_stack([
        U.ravel(),
        (V * (1.0 - U)).ravel(),
        (Wc * (1.0 - U) * (1.0 - V)).ravel(),
    ])
    return QuadratureRule(points=points, weights=weights, degree=degree)


def simplex_rule(dim: int, degree: int) -> QuadratureRule:
    """依維度選擇求積規則"""
    if dim == 1:
        return gauss_legendre(degree)
    if dim == 2:
        return triangle_rule(degree)
    if dim == 3:
        return tetrahedron_rule(degree)
    raise ValueError(f"不支援的維度: {dim}")
