"""
參考元素

每個參考元素由兩部分組成：
- 以單項式展開的「原始」多項式空間（Lagrange: P_k；Raviart–Thomas: P_k^d + x P̃_k；
  Nedelec 第一類最低階: a + b × x）
- 一組自由度泛函（點值、面法向矩、內部矩、邊切向矩）

基底係數由自由度矩陣的反矩陣（對偶基底）得到。所有面與邊的參數化
皆沿局部低索引 → 高索引頂點，因此在排序後的 cell 上與全域定向一致。
"""

from dataclasses import dataclass
from functools import lru_cache
from itertools import product
from typing import List, Tuple

import numpy as np
from scipy.special import eval_legendre

from src.data_models import ElementFamily
from src.mesh.mesh import LOCAL_EDGES_2D, LOCAL_EDGES_3D, LOCAL_FACES_3D
from .quadrature import gauss_legendre, simplex_rule


class UnsupportedSpaceError(ValueError):
    """不支援的（族群, 階數, 維度）組合"""


SUPPORTED = {
    (ElementFamily.LAGRANGE, 2): (1, 2, 3),
    (ElementFamily.LAGRANGE, 3): (1,),
    (ElementFamily.RAVIART_THOMAS, 2): (1, 2),
    (ElementFamily.RAVIART_THOMAS, 3): (0,),
    (ElementFamily.NEDELEC, 3): (0,),
}


def check_supported(family: ElementFamily, order: int, dim: int) -> None:
    orders = SUPPORTED.get((family, dim), ())
    if order not in orders:
        raise UnsupportedSpaceError(
            f"不支援的有限元素空間: {family.value} 階數 {order} 於 {dim}D"
        )


# ============================================================================
# 單項式
# ============================================================================

@lru_cache(maxsize=None)
def monomial_exponents(dim: int, degree: int) -> np.ndarray:
    """總次數 ≤ degree 的指數，依次數再字典序排列"""
    exps = [e for e in product(range(degree + 1), repeat=dim) if sum(e) <= degree]
    exps.sort(key=lambda e: (sum(e), tuple(-x for x in e)))
    return np.array(exps, dtype=np.int64)


def eval_monomials(exps: np.ndarray, points: np.ndarray) -> np.ndarray:
    """單項式值 (n_mono, P)"""
    return np.prod(points.T[None, :, :] ** exps[:, :, None], axis=1)


def eval_monomial_grads(exps: np.ndarray, points: np.ndarray) -> np.ndarray:
    """單項式梯度 (n_mono, d, P)"""
    n, d = exps.shape
    grads = np.zeros((n, d, len(points)))
    for k in range(d):
        shifted = exps.copy()
        shifted[:, k] = np.maximum(shifted[:, k] - 1, 0)
        grads[:, k, :] = exps[:, k, None] * eval_monomials(shifted, points)
    return grads


# ============================================================================
# 自由度泛函
# ============================================================================

@dataclass(frozen=True)
class DofFunctional:
    """ℓ(v) = Σ_p weights[p] · v(points[p])，並記錄所屬拓撲實體"""
    points: np.ndarray
    weights: np.ndarray
    entity_dim: int
    entity: int


def _vertices(dim: int) -> np.ndarray:
    return np.vstack([np.zeros(dim), np.eye(dim)])


def _edge_list(dim: int):
    return LOCAL_EDGES_2D if dim == 2 else LOCAL_EDGES_3D


def _lagrange_functionals(dim: int, k: int) -> List[DofFunctional]:
    verts = _vertices(dim)
    dofs = [DofFunctional(verts[i][None], np.ones((1, 1)), 0, i) for i in range(dim + 1)]
    if k >= 2:
        for e, (i, j) in enumerate(_edge_list(dim)):
            for m in range(1, k):
                x = verts[i] + (m / k) * (verts[j] - verts[i])
                dofs.append(DofFunctional(x[None], np.ones((1, 1)), 1, e))
    if dim == 2 and k >= 3:
        for a, b in product(range(1, k), repeat=2):
            if a + b < k:
                x = np.array([a / k, b / k])
                dofs.append(DofFunctional(x[None], np.ones((1, 1)), 2, 0))
    return dofs


def _rt_functionals(dim: int, k: int) -> List[DofFunctional]:
    verts = _vertices(dim)
    dofs = []
    if dim == 2:
        rule = gauss_legendre(2 * k + 2)
        s = rule.points[:, 0]
        for f, (i, j) in enumerate(LOCAL_EDGES_2D):
            t = verts[j] - verts[i]
            normal = np.array([t[1], -t[0]])
            pts = verts[i] + s[:, None] * t
            for m in range(k + 1):
                q = eval_legendre(m, 2.0 * s - 1.0)
                dofs.append(DofFunctional(pts, (rule.weights * q)[:, None] * normal, 1, f))
    else:
        rule = simplex_rule(2, 2 * k + 2)
        for f, (a, b, c) in enumerate(LOCAL_FACES_3D):
            ta, tb = verts[b] - verts[a], verts[c] - verts[a]
            normal = np.cross(ta, tb)
            pts = verts[a] + rule.points[:, :1] * ta + rule.points[:, 1:2] * tb
            for exp in monomial_exponents(2, k):
                q = np.prod(rule.points ** exp, axis=1)
                dofs.append(DofFunctional(pts, (rule.weights * q)[:, None] * normal, 2, f))
    if k >= 1:
        rule = simplex_rule(dim, 2 * k + 1)
        for exp in monomial_exponents(dim, k - 1):
            q = np.prod(rule.points ** exp, axis=1)
            for c in range(dim):
                w = np.zeros((rule.n_points, dim))
                w[:, c] = rule.weights * q
                dofs.append(DofFunctional(rule.points, w, dim, 0))
    return dofs


def _nedelec_functionals(dim: int) -> List[DofFunctional]:
    verts = _vertices(dim)
    rule = gauss_legendre(3)
    s = rule.points[:, 0]
    dofs = []
    for e, (i, j) in enumerate(LOCAL_EDGES_3D):
        t = verts[j] - verts[i]
        pts = verts[i] + s[:, None] * t
        dofs.append(DofFunctional(pts, rule.weights[:, None] * t, 1, e))
    return dofs


# ============================================================================
# 原始多項式空間
# ============================================================================

def _prime_lagrange(dim: int, k: int) -> Tuple[np.ndarray, np.ndarray]:
    exps = monomial_exponents(dim, k)
    coef = np.eye(len(exps))[:, None, :]
    return exps, coef


def _prime_rt(dim: int, k: int) -> Tuple[np.ndarray, np.ndarray]:
    exps = monomial_exponents(dim, k + 1)
    index = {tuple(e): n for n, e in enumerate(exps)}
    prime = []
    for e in monomial_exponents(dim, k):
        for c in range(dim):
            p = np.zeros((dim, len(exps)))
            p[c, index[tuple(e)]] = 1.0
            prime.append(p)
    for e in monomial_exponents(dim, k):
        if sum(e) != k:
            continue
        p = np.zeros((dim, len(exps)))
        for c in range(dim):
            shifted = np.array(e)
            shifted[c] += 1
            p[c, index[tuple(shifted)]] = 1.0
        prime.append(p)
    return exps, np.array(prime)


def _prime_nedelec(dim: int) -> Tuple[np.ndarray, np.ndarray]:
    exps = monomial_exponents(dim, 1)
    index = {tuple(e): n for n, e in enumerate(exps)}
    prime = []
    for c in range(dim):
        p = np.zeros((dim, len(exps)))
        p[c, index[(0,) * dim]] = 1.0
        prime.append(p)
    # x × e_c
    for c in range(dim):
        e_c = np.eye(dim)[c]
        p = np.zeros((dim, len(exps)))
        for i in range(dim):
            for j in range(dim):
                coeff = np.cross(np.eye(dim)[j], e_c)[i]
                if coeff:
                    p[i, index[tuple(np.eye(dim, dtype=np.int64)[j])]] += coeff
        prime.append(p)
    return exps, np.array(prime)


# ============================================================================
# 參考元素
# ============================================================================

@dataclass(frozen=True, eq=False)
class ReferenceElement:
    """參考單純形上的有限元素"""
    family: ElementFamily
    order: int
    dim: int
    exponents: np.ndarray
    coefficients: np.ndarray
    functionals: Tuple[DofFunctional, ...]

    @property
    def n_dofs(self) -> int:
        return len(self.functionals)

    @property
    def n_components(self) -> int:
        return self.coefficients.shape[1]

    @property
    def is_vector(self) -> bool:
        return self.family is not ElementFamily.LAGRANGE

    @property
    def dofs_per_entity(self) -> Tuple[int, ...]:
        """每個維度的單一實體上的自由度數"""
        counts = [0] * (self.dim + 1)
        for ell in self.functionals:
            if ell.entity == 0:
                counts[ell.entity_dim] += 1
        return tuple(counts)

    def tabulate(self, points: np.ndarray) -> np.ndarray:
        """參考基底值 (P, n_dofs, n_comp)"""
        mono = eval_monomials(self.exponents, points)
        return np.einsum('jcm,mp->pjc', self.coefficients, mono)

    def tabulate_grads(self, points: np.ndarray) -> np.ndarray:
        """參考基底梯度 (P, n_dofs, n_comp, d)"""
        grads = eval_monomial_grads(self.exponents, points)
        return np.einsum('jcm,mkp->pjck', self.coefficients, grads)

    def apply_functionals(self, fn) -> np.ndarray:
        """對參考座標上的函數 fn(points) -> (P, n_comp) 套用所有自由度泛函"""
        return np.array([np.sum(ell.weights * fn(ell.points)) for ell in self.functionals])


def _dof_matrix(exps: np.ndarray, prime: np.ndarray, functionals: List[DofFunctional]) -> np.ndarray:
    D = np.empty((len(functionals), len(prime)))
    for i, ell in enumerate(functionals):
        values = np.einsum('jcm,mp->jpc', prime, eval_monomials(exps, ell.points))
        D[i] = np.einsum('pc,jpc->j', ell.weights, values)
    return D


@lru_cache(maxsize=None)
def reference_element(family: ElementFamily, order: int, dim: int) -> ReferenceElement:
    """
    建構（並快取）參考元素

    Raises:
        UnsupportedSpaceError: 組合不在支援集合內
    """
    check_supported(family, order, dim)
    if family is ElementFamily.LAGRANGE:
        exps, prime = _prime_lagrange(dim, order)
        functionals = _lagrange_functionals(dim, order)
    elif family is ElementFamily.RAVIART_THOMAS:
        exps, prime = _prime_rt(dim, order)
        functionals = _rt_functionals(dim, order)
    else:
        exps, prime = _prime_nedelec(dim)
        functionals = _nedelec_functionals(dim)

    D = _dof_matrix(exps, prime, functionals)
    if D.shape[0] != D.shape[1]:
        raise UnsupportedSpaceError(f"{family.value} 階數 {order}: 自由度數 {D.shape[0]} 與空間維度 {D.shape[1]} 不符")
    C = np.linalg.inv(D)
    coefficients = np.einsum('ij,icm->jcm', C, prime)
    return ReferenceElement(family=family, order=order, dim=dim, exponents=exps,
                            coefficients=coefficients, functionals=tuple(functionals))
