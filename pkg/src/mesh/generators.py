"""
結構化網格產生器

單位正方形（固定對角線切分）與單位立方體（Kuhn 六面體切分）。
兩者在 M → 2M 加密下皆為巢狀網格。
"""

from itertools import permutations

import numpy as np
from loguru import logger

from .mesh import Mesh, MeshError, build_mesh


def generate_unit_square_mesh(M: int) -> Mesh:
    """
    (0,1)² 上的結構化三角網格

    每個格子沿 v00–v11 對角線切成兩個三角形。

    Args:
        M: 每個方向的格數

    Returns:
        (M+1)² 個頂點、2M² 個三角形的 Mesh
    """
    if M < 1:
        raise MeshError(f"M 必須 ≥ 1: {M}")
    t = np.linspace(0.0, 1.0, M + 1)
    X, Y = np.meshgrid(t, t, indexing='xy')
    vertices = np.column_stack([X.ravel(), Y.ravel()])

    i, j = np.meshgrid(np.arange(M), np.arange(M), indexing='xy')
    v00 = (i + (M + 1) * j).ravel()
    v10 = v00 + 1
    v01 = v00 + (M + 1)
    v11 = v01 + 1
    cells = np.concatenate([
        np.column_stack([v00, v10, v11]),
        np.column_stack([v00, v11, v01]),
    ])
    mesh = build_mesh(vertices, cells)
    logger.debug(f"單位正方形網格 M={M}: {mesh.n_cells} 個三角形")
    return mesh


def generate_unit_cube_mesh(M: int) -> Mesh:
    """
    (0,1)³ 上的結構化四面體網格

    每個格子以 Kuhn 切分為 6 個沿 000 → 111 對角線的四面體。
    """
    if M < 1:
        raise MeshError(f"M 必須 ≥ 1: {M}")
    t = np.linspace(0.0, 1.0, M + 1)
    Z, Y, X = np.meshgrid(t, t, t, indexing='ij')
    vertices = np.column_stack([X.ravel(), Y.ravel(), Z.ravel()])

    def index(i, j, k):
        return i + (M + 1) * (j + (M + 1) * k)

    k, j, i = np.meshgrid(np.arange(M), np.arange(M), np.arange(M), indexing='ij')
    i, j, k = i.ravel(), j.ravel(), k.ravel()
    unit = np.eye(3, dtype=np.int64)
    tets = []
    for perm in permutations(range(3)):
        corner = np.zeros(3, dtype=np.int64)
        path = [index(i, j, k)]
        for axis in perm:
            corner = corner + unit[axis]
            path.append(index(i + corner[0], j + corner[1], k + corner[2]))
        tets.append(np.column_stack(path))
    mesh = build_mesh(vertices, np.concatenate(tets))
    logger.debug(f"單位立方體網格 M={M}: {mesh.n_cells} 個四面體")
    return mesh
