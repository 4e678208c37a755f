"""
雙線性與線性形式的組裝

所有組裝皆以 einsum 計算每個 cell 的局部矩陣，再以 COO → CSR
（sum_duplicates + sort_indices）合併；累加順序固定，結果逐位元可重現。
"""

from typing import Callable, Dict, Optional, Tuple

import numpy as np
import scipy.sparse as sp
from loguru import logger

from .quadrature import simplex_rule
from .spaces import FunctionSpace, Tabulation


def default_degree(space: FunctionSpace) -> int:
    """雙線性形式的求積精確度 2r + 2"""
    return 2 * max(space.order, 1) + 2


def _check_same_mesh(*spaces: FunctionSpace) -> None:
    meshes = {id(s.mesh) for s in spaces}
    if len(meshes) != 1:
        raise ValueError("空間必須定義在同一個網格上")


class QuadratureContext:
    """
    求積點上的評估環境

    提供物理座標 x、積分權重 (w·|det J|) 以及場在求積點上的值與導數。
    基底表格依空間快取。
    """

    def __init__(self, mesh, degree: int):
        self.mesh = mesh
        self.degree = degree
        self.rule = simplex_rule(mesh.dim, degree)
        C, Q = mesh.n_cells, self.rule.n_points
        self.n_cells, self.n_points = C, Q
        self.x = mesh.map_to_physical(self.rule.points)
        self.weights = np.abs(mesh.det_jacobians)[:, None] * self.rule.weights[None, :]
        self._cells = np.repeat(np.arange(C), Q)
        self._refs = np.tile(self.rule.points, (C, 1))
        self._tabs: Dict[int, Tuple[FunctionSpace, Tabulation]] = {}

    def tabulation(self, space: FunctionSpace) -> Tabulation:
        key = id(space)
        if key not in self._tabs:
            self._tabs[key] = (space, space.tabulate(self._cells, self._refs))
        return self._tabs[key][1]

    def _shape(self, flat: np.ndarray) -> np.ndarray:
        return flat.reshape((self.n_cells, self.n_points) + flat.shape[1:])

    def basis(self, space: FunctionSpace, kind: str = 'value') -> np.ndarray:
        """基底（或其導數）在求積點上的值，形狀 (C, Q, L, ...)"""
        tab = self.tabulation(space)
        if kind == 'value':
            data = tab.values[:, :, 0] if not space.element.is_vector else tab.values
        elif kind == 'grad':
            data = tab.grads[:, :, 0, :] if not space.element.is_vector else tab.grads
        elif kind == 'div':
            data = tab.div
        elif kind == 'curl':
            data = tab.curl
        else:
            raise ValueError(f"未知的基底量: {kind}")
        return self._shape(data)

    def evaluate(self, field, kind: str = 'value') -> np.ndarray:
        """場在求積點上的值，形狀 (C, Q, ...)"""
        local = field.coeffs[field.space.dof_map]
        return np.einsum('cl,cql...->cq...', local, self.basis(field.space, kind))

    def integrate(self, values: np.ndarray) -> complex:
        """∫ values，values 形狀 (C, Q)"""
        return np.sum(self.weights * values)


def to_csr(rows: np.ndarray, cols: np.ndarray, data: np.ndarray, shape) -> sp.csr_matrix:
    """COO → CSR，合併重複項並排序欄索引"""
    matrix = sp.coo_matrix((data.ravel(), (rows.ravel(), cols.ravel())), shape=shape).tocsr()
    matrix.sum_duplicates()
    matrix.sort_indices()
    return matrix


def _assemble(test: FunctionSpace, trial: FunctionSpace, local: np.ndarray) -> sp.csr_matrix:
    rows = np.broadcast_to(test.dof_map[:, :, None], local.shape)
    cols = np.broadcast_to(trial.dof_map[:, None, :], local.shape)
    return to_csr(rows, cols, local, (test.ndofs, trial.ndofs))


def _context(space: FunctionSpace, degree: Optional[int], ctx: Optional[QuadratureContext]) -> QuadratureContext:
    if ctx is not None:
        return ctx
    return QuadratureContext(space.mesh, degree if degree is not None else default_degree(space))


def assemble_mass(space: FunctionSpace, degree: Optional[int] = None,
                  ctx: Optional[QuadratureContext] = None) -> sp.csr_matrix:
    """(u, v)"""
    ctx = _context(space, degree, ctx)
    phi = ctx.basis(space)
    if phi.ndim == 3:
        local = np.einsum('cq,cqi,cqj->cij', ctx.weights, phi, phi)
    else:
        local = np.einsum('cq,cqid,cqjd->cij', ctx.weights, phi, phi)
    logger.debug(f"組裝質量矩陣: {space}")
    return _assemble(space, space, local)


def assemble_weighted_mass(space: FunctionSpace, weight: np.ndarray,
                           ctx: QuadratureContext) -> sp.csr_matrix:
    """(ρ u, v)，ρ 為求積點上的純量權重 (C, Q)"""
    phi = ctx.basis(space)
    if phi.ndim == 3:
        local = np.einsum('cq,cqi,cqj->cij', ctx.weights * weight, phi, phi)
    else:
        local = np.einsum('cq,cqid,cqjd->cij', ctx.weights * weight, phi, phi)
    return _assemble(space, space, local)


def assemble_stiffness(space: FunctionSpace, degree: Optional[int] = None,
                       ctx: Optional[QuadratureContext] = None) -> sp.csr_matrix:
    """(∇u, ∇v)"""
    if space.element.is_vector:
        raise ValueError("勁度矩陣僅適用於 Lagrange 空間")
    ctx = _context(space, degree, ctx)
    grad = ctx.basis(space, 'grad')
    local = np.einsum('cq,cqid,cqjd->cij', ctx.weights, grad, grad)
    return _assemble(space, space, local)


def assemble_divdiv(space: FunctionSpace, degree: Optional[int] = None,
                    ctx: Optional[QuadratureContext] = None) -> sp.csr_matrix:
    """(div u, div v)"""
    ctx = _context(space, degree, ctx)
    div = ctx.basis(space, 'div')
    local = np.einsum('cq,cqi,cqj->cij', ctx.weights, div, div)
    return _assemble(space, space, local)


def assemble_mixed_curl(curl_space: FunctionSpace, vector_space: FunctionSpace,
                        degree: Optional[int] = None,
                        ctx: Optional[QuadratureContext] = None) -> sp.csr_matrix:
    """
    C[i, j] = (curl χ_i, v_j)

    2D 中 χ 為 Lagrange 純量，curl χ = (∂yχ, −∂xχ)；3D 中 χ 為 Nedelec 向量。
    """
    _check_same_mesh(curl_space, vector_space)
    ctx = _context(curl_space, degree, ctx)
    curl = ctx.basis(curl_space, 'curl')
    phi = ctx.basis(vector_space)
    local = np.einsum('cq,cqid,cqjd->cij', ctx.weights, curl, phi)
    return _assemble(curl_space, vector_space, local)


def assemble_weighted_vector(space: FunctionSpace, integrand: Callable[[QuadratureContext], np.ndarray],
                             degree: Optional[int] = None, against: str = 'value',
                             ctx: Optional[QuadratureContext] = None) -> np.ndarray:
    """
    b_i = ∫ F · B_i，B_i 為基底的值（或 'grad'、'div'、'curl'）

    Args:
        integrand: integrand(ctx) 回傳求積點上的 F，形狀 (C, Q) 或 (C, Q, d)
        degree: 求積精確度（預設 2r + 2）
    """
    ctx = _context(space, degree, ctx)
    F = np.asarray(integrand(ctx))
    basis = ctx.basis(space, against)
    if basis.ndim == 3:
        local = np.einsum('cq,cq,cqi->ci', ctx.weights, F, basis)
    else:
        local = np.einsum('cq,cqd,cqid->ci', ctx.weights, F, basis)
    out = np.zeros(space.ndofs, dtype=local.dtype)
    np.add.at(out, space.dof_map.ravel(), local.ravel())
    return out
