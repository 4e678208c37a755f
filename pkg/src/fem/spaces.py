"""
有限元素空間與全域自由度編號

全域編號依實體維度分段：頂點、邊、面（3D）、cell。同一實體上的自由度
依參考元素中的順序排列；由於 cell 頂點已排序，此順序與全域定向一致，
不需要額外的符號。

物理映射：
- Lagrange: 直接合成，∇φ = J^{-T} ∇̂φ̂
- Raviart–Thomas: 反變 Piola φ = J φ̂ / det J
- Nedelec: 共變 Piola φ = J^{-T} φ̂
"""

from dataclasses import dataclass
from functools import cached_property
from typing import Dict, Optional

import numpy as np

from src.data_models import ElementFamily, ValueKind
from src.mesh.mesh import Mesh
from .reference import ReferenceElement, reference_element


@dataclass(frozen=True)
class Tabulation:
    """物理基底在一組點上的值；N 為點數，L 為局部自由度數"""
    cells: np.ndarray
    values: np.ndarray
    grads: Optional[np.ndarray] = None

    @property
    def div(self) -> np.ndarray:
        """(N, L)"""
        return np.trace(self.grads, axis1=2, axis2=3)

    @property
    def curl(self) -> np.ndarray:
        """
        2D 純量場：向量 curl χ = (∂yχ, −∂xχ)，形狀 (N, L, 2)
        2D 向量場：純量 curl v = ∂x v_y − ∂y v_x，形狀 (N, L)
        3D 向量場：形狀 (N, L, 3)
        """
        g = self.grads
        n_comp, dim = g.shape[2], g.shape[3]
        if dim == 2 and n_comp == 1:
            return np.stack([g[:, :, 0, 1], -g[:, :, 0, 0]], axis=-1)
        if dim == 2:
            return g[:, :, 1, 0] - g[:, :, 0, 1]
        return np.stack([
            g[:, :, 2, 1] - g[:, :, 1, 2],
            g[:, :, 0, 2] - g[:, :, 2, 0],
            g[:, :, 1, 0] - g[:, :, 0, 1],
        ], axis=-1)


class FunctionSpace:
    """網格上的有限元素空間"""

    def __init__(self, mesh: Mesh, family: ElementFamily, order: int,
                 value_kind: Optional[ValueKind] = None):
        self.mesh = mesh
        self.family = family
        self.order = order
        self.element: ReferenceElement = reference_element(family, order, mesh.dim)
        if value_kind is None:
            value_kind = ValueKind.REAL_VECTOR if self.element.is_vector else ValueKind.REAL_SCALAR
        self.value_kind = value_kind
        self._build_dof_map()

    def __repr__(self) -> str:
        return f"FunctionSpace({self.family.value}, order={self.order}, dim={self.mesh.dim}, ndofs={self.ndofs})"

    # ------------------------------------------------------------------
    # 自由度編號
    # ------------------------------------------------------------------

    def _entity_counts(self):
        mesh = self.mesh
        counts = [mesh.n_vertices, mesh.n_edges]
        if mesh.dim == 3:
            counts.append(len(mesh.faces))
        counts.append(mesh.n_cells)
        return counts

    def _cell_entities(self, entity_dim: int) -> np.ndarray:
        mesh = self.mesh
        if entity_dim == 0:
            return mesh.cells
        if entity_dim == 1:
            return mesh.cell_edges
        if entity_dim == mesh.dim:
            return np.arange(mesh.n_cells)[:, None]
        return mesh.cell_faces

    def _build_dof_map(self) -> None:
        per_entity = self.element.dofs_per_entity
        counts = self._entity_counts()
        offsets = np.concatenate([[0], np.cumsum([n * c for n, c in zip(per_entity, counts)])])
        self.entity_offsets = offsets
        self.ndofs = int(offsets[-1])

        rank: Dict[tuple, int] = {}
        columns = []
        for ell in self.element.functionals:
            key = (ell.entity_dim, ell.entity)
            k = rank.get(key, 0)
            rank[key] = k + 1
            entities = self._cell_entities(ell.entity_dim)[:, ell.entity]
            columns.append(offsets[ell.entity_dim] + entities * per_entity[ell.entity_dim] + k)
        self.dof_map = np.column_stack(columns).astype(np.int64)

    @property
    def n_local(self) -> int:
        return self.element.n_dofs

    @property
    def is_complex(self) -> bool:
        return self.value_kind is ValueKind.COMPLEX_SCALAR

    def entity_dofs(self, entity_dim: int, entities: np.ndarray) -> np.ndarray:
        """指定實體上的所有全域自由度"""
        n = self.element.dofs_per_entity[entity_dim]
        if n == 0 or len(entities) == 0:
            return np.empty(0, dtype=np.int64)
        base = self.entity_offsets[entity_dim] + np.asarray(entities, dtype=np.int64) * n
        return (base[:, None] + np.arange(n)[None, :]).ravel()

    @cached_property
    def boundary_dofs(self) -> np.ndarray:
        """位於邊界實體（頂點、邊、面）上的自由度，已排序"""
        mesh = self.mesh
        parts = [self.entity_dofs(0, mesh.boundary_vertices),
                 self.entity_dofs(1, mesh.boundary_edges)]
        if mesh.dim == 3:
            parts.append(self.entity_dofs(2, mesh.boundary_facets))
        return np.unique(np.concatenate(parts))

    # ------------------------------------------------------------------
    # 基底評估
    # ------------------------------------------------------------------

    def tabulate(self, cells: np.ndarray, ref_points: np.ndarray, derivatives: bool = True) -> Tabulation:
        """
        在每個 (cell, 參考點) 配對上評估物理基底

        Args:
            cells: (N,) cell 索引
            ref_points: (N, d) 參考座標
            derivatives: 是否計算梯度
        """
        el = self.element
        mesh = self.mesh
        ref_vals = np.empty((len(cells), el.n_dofs, el.n_components))
        ref_grads = np.empty((len(cells), el.n_dofs, el.n_components, mesh.dim)) if derivatives else None
        # 以唯一參考點分組減少單項式評估
        unique_pts, inverse = np.unique(ref_points, axis=0, return_inverse=True)
        inverse = np.asarray(inverse).ravel()
        vals_u = el.tabulate(unique_pts)
        ref_vals[:] = vals_u[inverse]
        if derivatives:
            ref_grads[:] = el.tabulate_grads(unique_pts)[inverse]

        J = mesh.jacobians[cells]
        invJ = mesh.inv_jacobians[cells]
        if self.family is ElementFamily.LAGRANGE:
            values = ref_vals
            grads = np.einsum('nlk,njcl->njck', invJ, ref_grads) if derivatives else None
        elif self.family is ElementFamily.RAVIART_THOMAS:
            scale = 1.0 / mesh.det_jacobians[cells]
            values = scale[:, None, None] * np.einsum('nia,nja->nji', J, ref_vals)
            grads = None
            if derivatives:
                grads = scale[:, None, None, None] * np.einsum(
                    'nia,njal,nlk->njik', J, ref_grads, invJ)
        else:
            values = np.einsum('nai,nja->nji', invJ, ref_vals)
            grads = None
            if derivatives:
                grads = np.einsum('nai,njal,nlk->njik', invJ, ref_grads, invJ)
        return Tabulation(cells=cells, values=values, grads=grads)

    def eval_basis(self, cell: int, ref_point: np.ndarray) -> Dict[str, np.ndarray]:
        """
        單一 cell、單一參考點上的物理基底值與適用的導數

        Returns:
            Lagrange: {'value', 'grad'}；Raviart–Thomas: {'value', 'div'}；
            Nedelec: {'value', 'curl'}
        """
        tab = self.tabulate(np.array([cell]), np.atleast_2d(np.asarray(ref_point, dtype=float)))
        out = {'value': tab.values[0, :, 0] if self.family is ElementFamily.LAGRANGE else tab.values[0]}
        if self.family is ElementFamily.LAGRANGE:
            out['grad'] = tab.grads[0, :, 0, :]
        elif self.family is ElementFamily.RAVIART_THOMAS:
            out['div'] = tab.div[0]
        else:
            out['curl'] = tab.curl[0]
        return out

    # ------------------------------------------------------------------
    # 插值
    # ------------------------------------------------------------------

    def pullback(self, cells: np.ndarray, values: np.ndarray) -> np.ndarray:
        """物理值 (C, P, n_comp) 拉回參考元素"""
        mesh = self.mesh
        if self.family is ElementFamily.LAGRANGE:
            return values
        if self.family is ElementFamily.RAVIART_THOMAS:
            det = mesh.det_jacobians[cells]
            return det[:, None, None] * np.einsum('cij,cpj->cpi', mesh.inv_jacobians[cells], values)
        return np.einsum('cji,cpj->cpi', mesh.jacobians[cells], values)

    def interpolate_dofs(self, fn) -> np.ndarray:
        """
        以自由度泛函插值

        Args:
            fn: fn(x) 其中 x 形狀 (C, P, d)，回傳 (C, P) 純量或 (C, P, d) 向量

        Returns:
            全域自由度向量
        """
        mesh = self.mesh
        cells = np.arange(mesh.n_cells)
        coeffs = None
        for j, ell in enumerate(self.element.functionals):
            x = mesh.map_to_physical(ell.points)
            v = np.asarray(fn(x))
            if v.ndim == 2:
                v = v[..., None]
            ref = self.pullback(cells, v)
            local = np.einsum('pc,Cpc->C', ell.weights, ref)
            if coeffs is None:
                coeffs = np.zeros(self.ndofs, dtype=local.dtype if np.iscomplexobj(local) else float)
            coeffs[self.dof_map[:, j]] = local
        return coeffs


def build_space(mesh: Mesh, family: ElementFamily, order: int,
                value_kind: Optional[ValueKind] = None) -> FunctionSpace:
    """
    建構有限元素空間

    Raises:
        UnsupportedSpaceError: 不支援的組合
    """
    return FunctionSpace(mesh, family, order, value_kind)
