"""
單純形網格資料結構

這個模組提供：
- 不可變的 Mesh 資料結構（三角形或四面體）
- 邊與面的全域定向（低索引 → 高索引）
- 每個 cell 相對於全域面法向的 ±1 符號
- 邊界標記、幾何快取與網格雜湊
- 點定位（巢狀網格之間的誤差轉移）
"""

import hashlib
from dataclasses import dataclass, field, replace
from functools import cached_property
from math import factorial
from typing import Dict, Optional, Tuple

import numpy as np
from loguru import logger
from scipy.spatial import cKDTree


class MeshError(ValueError):
    """網格建構或驗證失敗"""


# 2D 局部邊 k 對面頂點 k；3D 局部面 k 對面頂點 k
LOCAL_EDGES_2D = ((1, 2), (0, 2), (0, 1))
LOCAL_EDGES_3D = ((0, 1), (0, 2), (0, 3), (1, 2), (1, 3), (2, 3))
LOCAL_FACES_3D = ((1, 2, 3), (0, 2, 3), (0, 1, 3), (0, 1, 2))

DEFAULT_BOUNDARY_TAG = 1


def local_edges(dim: int) -> Tuple[Tuple[int, int], ...]:
    return LOCAL_EDGES_2D if dim == 2 else LOCAL_EDGES_3D


def local_facets(dim: int) -> Tuple[Tuple[int, ...], ...]:
    return LOCAL_EDGES_2D if dim == 2 else LOCAL_FACES_3D


@dataclass(frozen=True, eq=False)
class Mesh:
    """
    單純形網格

    cells 內的頂點索引依升冪儲存；cell_parity 記錄此排列下 Jacobian 行列式的符號。
    局部邊因此與全域邊同向。
    2D 中 facets 即為 edges。
    """
    dim: int
    vertices: np.ndarray
    cells: np.ndarray
    cell_parity: Optional[np.ndarray] = None
    edges: Optional[np.ndarray] = None
    cell_edges: Optional[np.ndarray] = None
    faces: Optional[np.ndarray] = None
    cell_faces: Optional[np.ndarray] = None
    cell_facet_signs: Optional[np.ndarray] = None
    facet_tags: Optional[np.ndarray] = None
    tagged_facets: Dict[Tuple[int, ...], int] = field(default_factory=dict, repr=False)

    # ------------------------------------------------------------------
    # 拓撲
    # ------------------------------------------------------------------

    @property
    def n_vertices(self) -> int:
        return len(self.vertices)

    @property
    def n_cells(self) -> int:
        return len(self.cells)

    @property
    def n_edges(self) -> int:
        return len(self.edges)

    @property
    def facets(self) -> np.ndarray:
        return self.edges if self.dim == 2 else self.faces

    @property
    def cell_facets(self) -> np.ndarray:
        return self.cell_edges if self.dim == 2 else self.cell_faces

    @property
    def n_facets(self) -> int:
        return len(self.facets)

    @cached_property
    def facet_cell_count(self) -> np.ndarray:
        return np.bincount(self.cell_facets.ravel(), minlength=self.n_facets)

    @cached_property
    def boundary_facets(self) -> np.ndarray:
        return np.flatnonzero(self.facet_cell_count == 1)

    @property
    def boundary_tags(self) -> Dict[int, int]:
        """邊界面索引 → 整數標記"""
        return {int(f): int(self.facet_tags[f]) for f in self.boundary_facets}

    @cached_property
    def boundary_vertices(self) -> np.ndarray:
        return np.unique(self.facets[self.boundary_facets])

    @cached_property
    def boundary_edges(self) -> np.ndarray:
        """位於邊界上的邊（3D 為邊界面的邊）"""
        if self.dim == 2:
            return self.boundary_facets
        on_boundary = np.zeros(self.n_edges, dtype=bool)
        on_face = np.zeros(self.n_faces_or_zero, dtype=bool)
        on_face[self.boundary_facets] = True
        for k, (a, b, c) in enumerate(LOCAL_FACES_3D):
            rows = on_face[self.cell_faces[:, k]]
            for i, j in ((a, b), (a, c), (b, c)):
                e = LOCAL_EDGES_3D.index((i, j))
                on_boundary[self.cell_edges[rows, e]] = True
        return np.flatnonzero(on_boundary)

    @property
    def n_faces_or_zero(self) -> int:
        return 0 if self.faces is None else len(self.faces)

    # ------------------------------------------------------------------
    # 幾何
    # ------------------------------------------------------------------

    @cached_property
    def jacobians(self) -> np.ndarray:
        """仿射映射 x = x0 + J x̂ 的 J，形狀 (C, d, d)"""
        x = self.vertices[self.cells]
        return np.transpose(x[:, 1:, :] - x[:, :1, :], (0, 2, 1))

    @cached_property
    def det_jacobians(self) -> np.ndarray:
        return np.linalg.det(self.jacobians)

    @cached_property
    def inv_jacobians(self) -> np.ndarray:
        return np.linalg.inv(self.jacobians)

    @cached_property
    def cell_volumes(self) -> np.ndarray:
        return np.abs(self.det_jacobians) / factorial(self.dim)

    @property
    def volume(self) -> float:
        return float(self.cell_volumes.sum())

    @cached_property
    def cell_centroids(self) -> np.ndarray:
        return self.vertices[self.cells].mean(axis=1)

    @cached_property
    def edge_lengths(self) -> np.ndarray:
        d = self.vertices[self.edges[:, 1]] - self.vertices[self.edges[:, 0]]
        return np.linalg.norm(d, axis=1)

    @property
    def h(self) -> float:
        """最大邊長"""
        return float(self.edge_lengths.max())

    @cached_property
    def facet_normals(self) -> np.ndarray:
        """
        全域（未正規化）面法向

        2D: t = x_b − x_a, N = (t_y, −t_x)；3D: N = (x_b − x_a) × (x_c − x_a)
        """
        x = self.vertices[self.facets]
        if self.dim == 2:
            t = x[:, 1] - x[:, 0]
            return np.column_stack([t[:, 1], -t[:, 0]])
        return np.cross(x[:, 1] - x[:, 0], x[:, 2] - x[:, 0])

    def map_to_physical(self, ref_points: np.ndarray, cells: Optional[np.ndarray] = None) -> np.ndarray:
        """將參考座標 (Q, d) 映射到每個 cell 的物理座標 (C, Q, d)"""
        cells = np.arange(self.n_cells) if cells is None else cells
        x0 = self.vertices[self.cells[cells, 0]]
        return x0[:, None, :] + np.einsum('cij,qj->cqi', self.jacobians[cells], ref_points)

    # ------------------------------------------------------------------
    # 識別
    # ------------------------------------------------------------------

    def mesh_hash(self) -> str:
        """頂點與 cell 陣列的 SHA-256"""
        digest = hashlib.sha256()
        digest.update(np.ascontiguousarray(self.vertices, dtype=np.float64).tobytes())
        digest.update(np.ascontiguousarray(self.cells, dtype=np.int64).tobytes())
        return digest.hexdigest()

    def summary(self) -> Dict[str, float]:
        return {
            'dim': self.dim,
            'vertices': self.n_vertices,
            'edges': self.n_edges,
            'faces': self.n_faces_or_zero,
            'cells': self.n_cells,
            'volume': self.volume,
            'h_max': self.h,
        }


# ============================================================================
# 建構與定向
# ============================================================================

def build_mesh(vertices: np.ndarray, cells: np.ndarray,
               tagged_facets: Optional[Dict[Tuple[int, ...], int]] = None) -> Mesh:
    """
    由頂點與 cell 連接建立已定向的網格

    Args:
        vertices: (V, d) 座標
        cells: (C, d+1) 頂點索引
        tagged_facets: 排序後面頂點組 → 物理標記；未列出的邊界面標記為 1

    Returns:
        已定向的 Mesh
    """
    vertices = np.asarray(vertices, dtype=float)
    cells = np.asarray(cells, dtype=np.int64)
    if cells.ndim != 2 or cells.shape[1] not in (3, 4):
        raise MeshError(f"cell 陣列形狀不正確: {cells.shape}")
    dim = cells.shape[1] - 1
    if vertices.ndim != 2 or vertices.shape[1] < dim:
        raise MeshError(f"頂點陣列形狀不正確: {vertices.shape}")
    vertices = np.ascontiguousarray(vertices[:, :dim])
    if cells.size and (cells.min() < 0 or cells.max() >= len(vertices)):
        raise MeshError("cell 參照了不存在的頂點")
    mesh = Mesh(dim=dim, vertices=vertices, cells=cells,
                tagged_facets=dict(tagged_facets or {}))
    return orient_entities(mesh)


def orient_entities(mesh: Mesh) -> Mesh:
    """
    為邊與面指定全域定向並計算每個 cell 的相對符號

    全域定向只取決於頂點索引，因此與 cell 的輸入順序無關。
    """
    dim = mesh.dim
    cells = np.sort(mesh.cells, axis=1)
    x = mesh.vertices[cells]
    jac = x[:, 1:, :] - x[:, :1, :]
    det = np.linalg.det(jac)
    scale = np.max(np.abs(mesh.vertices.max(axis=0) - mesh.vertices.min(axis=0))) if len(mesh.vertices) else 1.0
    degenerate = np.flatnonzero(np.abs(det) <= 1e-12 * scale ** dim)
    if degenerate.size:
        raise MeshError(f"網格包含退化的 cell: {degenerate[:10].tolist()}")
    parity = np.where(det > 0, 1, -1).astype(np.int8)

    edge_pairs = local_edges(dim)
    all_edges = np.stack([cells[:, list(p)] for p in edge_pairs], axis=1).reshape(-1, 2)
    edges, edge_inverse = np.unique(all_edges, axis=0, return_inverse=True)
    cell_edges = edge_inverse.reshape(len(cells), len(edge_pairs))
    # 排序後局部邊恆為低 → 高，與全域定向一致，不需要每個 cell 的邊符號

    faces = cell_faces = None
    if dim == 3:
        all_faces = np.stack([cells[:, list(f)] for f in LOCAL_FACES_3D], axis=1).reshape(-1, 3)
        faces, face_inverse = np.unique(all_faces, axis=0, return_inverse=True)
        cell_faces = face_inverse.reshape(len(cells), 4)

    facets = edges if dim == 2 else faces
    cell_facets = cell_edges if dim == 2 else cell_faces
    counts = np.bincount(cell_facets.ravel(), minlength=len(facets))
    non_manifold = np.flatnonzero(counts > 2)
    if non_manifold.size:
        raise MeshError(f"非流形的面（被超過兩個 cell 共用）: {facets[non_manifold[:10]].tolist()}")

    # 面法向與外法向比較得到 s_out
    fx = mesh.vertices[facets]
    if dim == 2:
        t = fx[:, 1] - fx[:, 0]
        normals = np.column_stack([t[:, 1], -t[:, 0]])
    else:
        normals = np.cross(fx[:, 1] - fx[:, 0], fx[:, 2] - fx[:, 0])
    facet_centroids = fx.mean(axis=1)
    outward = facet_centroids[cell_facets] - x.mean(axis=1)[:, None, :]
    cell_facet_signs = np.where(
        np.einsum('cki,cki->ck', normals[cell_facets], outward) > 0, 1, -1
    ).astype(np.int8)

    facet_tags = np.zeros(len(facets), dtype=np.int64)
    boundary = counts == 1
    facet_tags[boundary] = DEFAULT_BOUNDARY_TAG
    if mesh.tagged_facets:
        index = {tuple(int(v) for v in facets[f]): f for f in np.flatnonzero(boundary)}
        for key, tag in mesh.tagged_facets.items():
            f = index.get(tuple(sorted(int(v) for v in key)))
            if f is not None:
                facet_tags[f] = tag

    logger.debug(f"網格定向完成: V={len(mesh.vertices)}, E={len(edges)}, C={len(cells)}")
    return replace(
        mesh, cells=cells, cell_parity=parity, edges=edges, cell_edges=cell_edges,
        faces=faces, cell_faces=cell_faces,
        cell_facet_signs=cell_facet_signs, facet_tags=facet_tags,
    )


# ============================================================================
# 點定位
# ============================================================================

def barycentric(mesh: Mesh, cells: np.ndarray, points: np.ndarray) -> np.ndarray:
    """點在指定 cell 中的參考座標 x̂ = J⁻¹ (x − x0)"""
    x0 = mesh.vertices[mesh.cells[cells, 0]]
    return np.einsum('nij,nj->ni', mesh.inv_jacobians[cells], points - x0)


def locate_points(mesh: Mesh, points: np.ndarray, k: int = 12,
                  tol: float = 1e-10) -> Tuple[np.ndarray, np.ndarray]:
    """
    尋找包含每個點的 cell

    Args:
        mesh: 目標網格
        points: (N, d) 物理座標
        k: 以 cell 重心 KD 樹查詢的候選數

    Returns:
        (cell 索引, 參考座標)
    """
    points = np.asarray(points, dtype=float)
    tree = cKDTree(mesh.cell_centroids)
    k = min(k, mesh.n_cells)
    _, candidates = tree.query(points, k=k)
    candidates = candidates.reshape(len(points), k)

    found = np.full(len(points), -1, dtype=np.int64)
    for j in range(k):
        pending = np.flatnonzero(found < 0)
        if pending.size == 0:
            break
        c = candidates[pending, j]
        ref = barycentric(mesh, c, points[pending])
        inside = (ref.min(axis=1) >= -tol) & (ref.sum(axis=1) <= 1.0 + tol)
        found[pending[inside]] = c[inside]

    missing = np.flatnonzero(found < 0)
    for p in missing:
        ref = barycentric(mesh, np.arange(mesh.n_cells), np.repeat(points[p][None], mesh.n_cells, axis=0))
        slack = np.minimum(ref.min(axis=1), 1.0 - ref.sum(axis=1))
        best = int(np.argmax(slack))
        if slack[best] < -1e-6:
            raise MeshError(f"點 {points[p].tolist()} 不在網格內")
        found[p] = best
    return found, barycentric(mesh, found, points)
