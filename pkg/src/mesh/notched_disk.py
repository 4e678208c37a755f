"""
帶缺口圓盤網格產生器

以解析符號距離函數描述「圓盤減去楔形缺口」，邊界以固定間距取樣
（凹角頂點與缺口邊端點精確存在），內部以六角晶格填充，再以
Delaunay 三角化、Laplacian 平滑與長邊中點插入處理網格品質。
"""

import math

import networkx as nx
import numpy as np
from loguru import logger
from scipy.spatial import Delaunay

from src.data_models import NotchedDiskGeometry
from .mesh import Mesh, MeshError, build_mesh

MIN_ANGLE_DEG = 20.0
MAX_EDGE_FACTOR = 1.2


def signed_distance(geom: NotchedDiskGeometry, points: np.ndarray) -> np.ndarray:
    """區域的符號距離（內部為負）"""
    d_disk = np.linalg.norm(points, axis=1) - geom.radius
    apex = np.asarray(geom.apex)
    q = points - apex
    u = q[:, 0]
    v = np.abs(q[:, 1])
    s, c = math.sin(geom.notch_half_angle), math.cos(geom.notch_half_angle)
    along = u * c + v * s
    d_cone = np.where(along >= 0.0, v * c - u * s, np.hypot(u, v))
    return np.maximum(d_disk, -d_cone)


def boundary_points(geom: NotchedDiskGeometry, spacing: float) -> np.ndarray:
    """依逆時針順序取樣的邊界點：圓弧 Q+ → Q−、缺口邊 Q− → P → Q+"""
    R = geom.radius
    theta = geom.rim_angle
    arc_length = R * (2.0 * math.pi - 2.0 * theta)
    n_arc = max(int(math.ceil(arc_length / spacing)), 3)
    angles = theta + (2.0 * math.pi - 2.0 * theta) * np.arange(n_arc) / n_arc
    arc = np.column_stack([R * np.cos(angles), R * np.sin(angles)])

    apex = np.asarray(geom.apex)
    q_plus = np.array([R * math.cos(theta), R * math.sin(theta)])
    q_minus = np.array([q_plus[0], -q_plus[1]])
    n_side = max(int(math.ceil(geom.chord_parameter / spacing)), 1)
    s = np.arange(n_side)[:, None] / n_side
    lower = q_minus + s * (apex - q_minus)
    upper = apex + s * (q_plus - apex)
    return np.vstack([arc, lower, upper])


def _hex_lattice(geom: NotchedDiskGeometry, spacing: float) -> np.ndarray:
    R = geom.radius
    dy = spacing * math.sqrt(3.0) / 2.0
    ys = np.arange(-R, R + dy, dy)
    rows = []
    for row, y in enumerate(ys):
        offset = 0.5 * spacing * (row % 2)
        xs = np.arange(-R + offset, R + spacing, spacing)
        rows.append(np.column_stack([xs, np.full_like(xs, y)]))
    return np.vstack(rows)


def _triangulate(geom: NotchedDiskGeometry, points: np.ndarray) -> np.ndarray:
    tri = Delaunay(points).simplices
    x = points[tri]
    centroids = x.mean(axis=1)
    keep = signed_distance(geom, centroids) < 0.0
    tol = 1e-8 * geom.radius
    for a, b in ((0, 1), (1, 2), (0, 2)):
        keep &= signed_distance(geom, 0.5 * (x[:, a] + x[:, b])) < tol
    return tri[keep]


def _unique_edges(cells: np.ndarray) -> np.ndarray:
    edges = np.sort(np.vstack([cells[:, [1, 2]], cells[:, [0, 2]], cells[:, [0, 1]]]), axis=1)
    return np.unique(edges, axis=0)


def _smooth(points: np.ndarray, cells: np.ndarray, movable: np.ndarray,
            geom: NotchedDiskGeometry, clearance: float) -> np.ndarray:
    """對內部節點做一次 Laplacian 平滑，不讓節點靠近邊界"""
    edges = _unique_edges(cells)
    n = len(points)
    sums = np.zeros_like(points)
    counts = np.zeros(n)
    for a, b in ((0, 1), (1, 0)):
        np.add.at(sums, edges[:, a], points[edges[:, b]])
        np.add.at(counts, edges[:, a], 1.0)
    target = points.copy()
    has = counts > 0
    target[has] = sums[has] / counts[has, None]
    moved = points.copy()
    ok = movable & has & (signed_distance(geom, target) < -clearance)
    moved[ok] = target[ok]
    return moved


def triangle_angles(points: np.ndarray, cells: np.ndarray) -> np.ndarray:
    """每個三角形的三個內角（度）"""
    x = points[cells]
    angles = []
    for k in range(3):
        a = x[:, (k + 1) % 3] - x[:, k]
        b = x[:, (k + 2) % 3] - x[:, k]
        cosine = np.einsum('ij,ij->i', a, b) / (np.linalg.norm(a, axis=1) * np.linalg.norm(b, axis=1))
        angles.append(np.degrees(np.arccos(np.clip(cosine, -1.0, 1.0))))
    return np.column_stack(angles)


def check_boundary_loop(mesh: Mesh) -> bool:
    """邊界邊是否構成單一封閉迴圈"""
    graph = nx.Graph()
    graph.add_edges_from(map(tuple, mesh.edges[mesh.boundary_facets].tolist()))
    if graph.number_of_nodes() == 0:
        return False
    degrees_ok = all(deg == 2 for _, deg in graph.degree())
    return degrees_ok and nx.is_connected(graph)


def generate_notched_disk_mesh(geom: NotchedDiskGeometry, smoothing_sweeps: int = 4,
                               max_refinements: int = 10) -> Mesh:
    """
    產生帶楔形缺口圓盤的非結構三角網格

    Args:
        geom: 幾何參數
        smoothing_sweeps: Laplacian 平滑次數
        max_refinements: 長邊中點插入的最大輪數

    Returns:
        邊界標記為 1 的 Mesh
    """
    h = geom.target_h
    spacing = 0.85 * h
    bpts = boundary_points(geom, spacing)
    lattice = _hex_lattice(geom, spacing)
    clearance = 0.45 * spacing
    interior = lattice[signed_distance(geom, lattice) < -clearance]
    points = np.vstack([bpts, interior])
    movable = np.zeros(len(points), dtype=bool)
    movable[len(bpts):] = True
    logger.info(f"缺口圓盤網格: 邊界點 {len(bpts)}, 內部點 {len(interior)}, h={h:.4f}")

    cells = _triangulate(geom, points)
    for _ in range(smoothing_sweeps):
        points = _smooth(points, cells, movable, geom, 0.3 * spacing)
        cells = _triangulate(geom, points)

    for _ in range(max_refinements):
        edges = _unique_edges(cells)
        lengths = np.linalg.norm(points[edges[:, 1]] - points[edges[:, 0]], axis=1)
        long_edges = edges[lengths > MAX_EDGE_FACTOR * h]
        if len(long_edges) == 0:
            break
        midpoints = 0.5 * (points[long_edges[:, 0]] + points[long_edges[:, 1]])
        points = np.vstack([points, midpoints])
        cells = _triangulate(geom, points)

    used = np.unique(cells)
    if len(used) != len(points):
        remap = np.full(len(points), -1, dtype=np.int64)
        remap[used] = np.arange(len(used))
        points, cells = points[used], remap[cells]

    mesh = build_mesh(points, cells)
    _validate(mesh, geom)
    return mesh


def _validate(mesh: Mesh, geom: NotchedDiskGeometry) -> None:
    h = geom.target_h
    if not check_boundary_loop(mesh):
        raise MeshError("缺口圓盤網格的邊界不是單一封閉迴圈")
    if not np.any(np.all(np.isclose(mesh.vertices, geom.apex, atol=1e-12), axis=1)):
        raise MeshError("凹角頂點不在網格中")
    angles = triangle_angles(mesh.vertices, mesh.cells)
    min_angle = float(angles.min())
    if min_angle < MIN_ANGLE_DEG:
        raise MeshError(f"最小內角 {min_angle:.1f}° 低於 {MIN_ANGLE_DEG}°")
    if mesh.h > MAX_EDGE_FACTOR * h:
        raise MeshError(f"最大邊長 {mesh.h:.4f} 超過 {MAX_EDGE_FACTOR} × h = {MAX_EDGE_FACTOR * h:.4f}")
    euler = mesh.n_vertices - mesh.n_edges + mesh.n_cells
    if euler != 1:
        raise MeshError(f"Euler 特徵數為 {euler}，預期為 1")
    logger.info(
        f"缺口圓盤網格完成: {mesh.n_cells} 個三角形, 面積 {mesh.volume:.4f} "
        f"(解析值 {geom.area:.4f}), 最小角 {min_angle:.1f}°"
    )
