"""
TDGL 觀測量

- Gibbs 自由能（凝聚能、動能、磁場能三項）
- 渦旋計數（相位繞數）與低 |ψ| 區域的交叉檢查
- 點渦旋重整化能量
- 凹角附近的正常區面積比例
- 規範變換與電位、超電流重建
"""

from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import networkx as nx
import numpy as np
import sympy
from loguru import logger

from src.data_models import TdglParams
from src.fem.assembly import QuadratureContext
from src.fem.fields import Field
from .solver import TdglState, supercurrent_density

VORTEX_ZERO_PERTURBATION = 1e-14 * np.exp(0.3j)


# ============================================================================
# 能量
# ============================================================================

def gibbs_energy_terms(state: TdglState, params: TdglParams,
                       ctx: Optional[QuadratureContext] = None) -> Dict[str, float]:
    """
    Gibbs 自由能的三項

    凝聚能 ∫ ½(|ψ|² − 1)²、動能 ∫ |(∇/κ − iA)ψ|²、磁場能 ∫ |γ − H|²（以 γ 代表 curl A）
    """
    ctx = ctx or state.system.ctx
    psi = ctx.evaluate(state.psi)
    grad_psi = ctx.evaluate(state.psi, 'grad')
    A = ctx.evaluate(state.A)
    gamma = ctx.evaluate(state.gamma)
    H = params.applied_field(ctx.x, state.t)

    condensation = 0.5 * (np.abs(psi) ** 2 - 1.0) ** 2
    covariant = grad_psi / params.kappa - 1j * A * psi[..., None]
    kinetic = np.sum(np.abs(covariant) ** 2, axis=-1)
    diff = gamma - H
    magnetic = diff ** 2 if diff.ndim == 2 else np.sum(diff ** 2, axis=-1)
    return {
        'condensation': float(ctx.integrate(condensation).real),
        'kinetic': float(ctx.integrate(kinetic).real),
        'field': float(ctx.integrate(magnetic).real),
    }


def gibbs_energy(state: TdglState, params: TdglParams) -> float:
    """無因次 Gibbs 自由能"""
    return sum(gibbs_energy_terms(state, params).values())


def relative_energy_difference(previous: float, current: float) -> float:
    """|G_{n+1} − G_n| / G_n"""
    if previous == 0.0:
        return 0.0 if current == 0.0 else float('inf')
    return abs(current - previous) / abs(previous)


# ============================================================================
# 渦旋
# ============================================================================

@dataclass
class VortexCount:
    """渦旋計數結果"""
    count: int
    positions: np.ndarray
    windings: List[int] = field(default_factory=list)
    threshold_count: int = 0

    @property
    def total_winding(self) -> int:
        return int(sum(self.windings))


def _wrap(angle: np.ndarray) -> np.ndarray:
    """包到 (−π, π]"""
    return np.pi - np.mod(np.pi - angle, 2.0 * np.pi)


def _vertex_values(psi: Field) -> np.ndarray:
    mesh = psi.space.mesh
    values = np.array(psi.coeffs[:mesh.n_vertices], dtype=complex)
    values[values == 0] = VORTEX_ZERO_PERTURBATION
    return values


def cell_windings(psi: Field) -> np.ndarray:
    """每個三角形逆時針方向的相位繞數（以 2π 為單位）"""
    mesh = psi.space.mesh
    if mesh.dim != 2:
        raise ValueError("渦旋計數僅適用於 2D")
    phase = np.angle(_vertex_values(psi))[mesh.cells]
    total = (_wrap(phase[:, 1] - phase[:, 0]) + _wrap(phase[:, 2] - phase[:, 1])
             + _wrap(phase[:, 0] - phase[:, 2]))
    return np.rint(mesh.cell_parity * total / (2.0 * np.pi)).astype(np.int64)


def _cell_adjacency(mesh) -> nx.Graph:
    graph = nx.Graph()
    interior = np.flatnonzero(mesh.facet_cell_count == 2)
    owners: Dict[int, List[int]] = {}
    for c, facets in enumerate(mesh.cell_facets):
        for f in facets:
            owners.setdefault(int(f), []).append(c)
    graph.add_edges_from(tuple(owners[int(f)]) for f in interior)
    return graph


def count_vortices(psi: Field, threshold: float = 0.3) -> VortexCount:
    """
    以相位繞數計數渦旋

    |繞數| ≥ 1/2 的三角形標記為渦旋核心，相鄰的核心合併為一個渦旋，
    位置為以 (1 − |ψ|) 加權的重心。交叉檢查：{|ψ| < τ} 中不接觸邊界的連通分量數。
    """
    if not 0.0 < threshold < 1.0:
        raise ValueError(f"門檻必須介於 0 與 1 之間: {threshold}")
    mesh = psi.space.mesh
    windings = cell_windings(psi)
    marked = np.flatnonzero(np.abs(windings) >= 1)
    values = _vertex_values(psi)
    depletion = np.clip(1.0 - np.abs(values[mesh.cells]).mean(axis=1), 1e-12, None)

    graph = _cell_adjacency(mesh).subgraph(marked.tolist()).copy()
    graph.add_nodes_from(marked.tolist())
    positions, per_vortex = [], []
    for component in sorted(nx.connected_components(graph), key=min):
        cells = np.array(sorted(component))
        w = depletion[cells]
        positions.append((w[:, None] * mesh.cell_centroids[cells]).sum(axis=0) / w.sum())
        per_vortex.append(int(windings[cells].sum()))

    result = VortexCount(
        count=len(positions),
        positions=np.array(positions).reshape(-1, 2),
        windings=per_vortex,
        threshold_count=count_depleted_regions(psi, threshold),
    )
    logger.debug(f"渦旋數 {result.count}（低 |ψ| 區域 {result.threshold_count}）")
    return result


def count_depleted_regions(psi: Field, threshold: float) -> int:
    """{|ψ| < τ} 頂點集合中不接觸邊界的連通分量數"""
    mesh = psi.space.mesh
    low = np.abs(psi.coeffs[:mesh.n_vertices]) < threshold
    graph = nx.Graph()
    graph.add_nodes_from(np.flatnonzero(low).tolist())
    edges = mesh.edges[low[mesh.edges[:, 0]] & low[mesh.edges[:, 1]]]
    graph.add_edges_from(map(tuple, edges.tolist()))
    boundary = set(mesh.boundary_vertices.tolist())
    return sum(1 for comp in nx.connected_components(graph) if not comp & boundary)


def renormalized_energy(positions: Sequence[Sequence[float]], C: float) -> float:
    """
    w_n = −π Σ_{i≠j} log|x_i − x_j| + C π n Σ |x_i|²

    Raises:
        ValueError: 有重合的點
    """
    x = np.asarray(positions, dtype=float).reshape(-1, 2)
    n = len(x)
    if n == 0:
        return 0.0
    diff = x[:, None, :] - x[None, :, :]
    dist = np.linalg.norm(diff, axis=-1)
    off = ~np.eye(n, dtype=bool)
    if np.any(dist[off] == 0.0):
        raise ValueError("渦旋位置重合")
    interaction = -np.pi * np.sum(np.log(dist[off]))
    confinement = C * np.pi * n * np.sum(x ** 2)
    return float(interaction + confinement)


# ============================================================================
# 正常區
# ============================================================================

def normal_zone_fraction(psi: Field, corner: Tuple[float, float], radius: float,
                         threshold: float = 0.1) -> float:
    """凹角半徑 radius 範圍內 {|ψ| < threshold} 的面積比例"""
    mesh = psi.space.mesh
    ctx = QuadratureContext(mesh, 2 * max(psi.space.order, 1))
    near = np.linalg.norm(ctx.x - np.asarray(corner), axis=-1) <= radius
    area = np.sum(ctx.weights * near)
    if area == 0.0:
        return 0.0
    depleted = np.abs(ctx.evaluate(psi)) < threshold
    return float(np.sum(ctx.weights * (near & depleted)) / area)


# ============================================================================
# 規範變換與輸出量
# ============================================================================

class GaugeFunction:
    """
    解析規範函數 χ(x, t)

    Args:
        expr: sympy 運算式或字串，變數為 x, y（3D 加 z）與 t
        dim: 空間維度
    """

    def __init__(self, expr, dim: int = 2):
        self.dim = dim
        self.symbols = sympy.symbols('x y z')[:dim]
        self.t = sympy.Symbol('t')
        self.expr = sympy.sympify(expr)
        args = (*self.symbols, self.t)
        grad = [sympy.diff(self.expr, s) for s in self.symbols]
        hessian = [[sympy.diff(g, s) for s in self.symbols] for g in grad]
        self._value = sympy.lambdify(args, self.expr, 'numpy')
        self._grad = [sympy.lambdify(args, g, 'numpy') for g in grad]
        self._dt = sympy.lambdify(args, sympy.diff(self.expr, self.t), 'numpy')
        self._hessian = [[sympy.lambdify(args, h, 'numpy') for h in row] for row in hessian]

    def _call(self, fn, x: np.ndarray, t: float) -> np.ndarray:
        coords = [x[..., k] for k in range(self.dim)]
        return np.broadcast_to(np.asarray(fn(*coords, t), dtype=float), x.shape[:-1]).copy()

    def value(self, x: np.ndarray, t: float = 0.0) -> np.ndarray:
        return self._call(self._value, x, t)

    def grad(self, x: np.ndarray, t: float = 0.0) -> np.ndarray:
        return np.stack([self._call(g, x, t) for g in self._grad], axis=-1)

    def time_derivative(self, x: np.ndarray, t: float = 0.0) -> np.ndarray:
        return self._call(self._dt, x, t)

    def curl_of_gradient(self, x: np.ndarray, t: float = 0.0) -> np.ndarray:
        """curl ∇χ（恆為零，由 Hessian 的反對稱部分計算）"""
        H = [[self._call(h, x, t) for h in row] for row in self._hessian]
        if self.dim == 2:
            return H[1][0] - H[0][1]
        return np.stack([H[2][1] - H[1][2], H[0][2] - H[2][0], H[1][0] - H[0][1]], axis=-1)


def gauge_transform(psi: np.ndarray, A: np.ndarray, phi: np.ndarray, chi: GaugeFunction,
                    x: np.ndarray, t: float, params: TdglParams):
    """
    逐點規範變換 ζ = ψ e^{iκχ}, Q = A + ∇χ, Θ = φ − ∂χ/∂t

    Returns:
        (ζ, Q, Θ)
    """
    zeta = psi * np.exp(1j * params.kappa * chi.value(x, t))
    Q = A + chi.grad(x, t)
    theta = phi - chi.time_derivative(x, t)
    return zeta, Q, theta


def electric_potential(state: TdglState, params: TdglParams) -> np.ndarray:
    """每個 cell 上的 φ = −ω div A（平均值）"""
    return -params.omega * state.A.cell_average('div')


def supercurrent(state: TdglState, params: TdglParams) -> np.ndarray:
    """每個 cell 上的超電流 J = Im(ψ*∇ψ)/κ − |ψ|² A（平均值）"""
    ctx = QuadratureContext(state.mesh, 2 * max(state.psi.space.order, 1))
    psi = ctx.evaluate(state.psi)
    J = supercurrent_density(psi, ctx.evaluate(state.psi, 'grad'), params.kappa)
    J = J - (np.abs(psi) ** 2)[..., None] * ctx.evaluate(state.A)
    w = ctx.weights[..., None]
    return np.sum(w * J, axis=1) / ctx.weights.sum(axis=1)[:, None]
