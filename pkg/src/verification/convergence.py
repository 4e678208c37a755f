"""
收斂階估計

- Richardson 法：固定 Δt 與步數，網格 M、2M、4M，相鄰網格解的差
  e_c = ‖u_{h/2} − u_h‖、e_f = ‖u_{h/4} − u_{h/2}‖，p = log(e_c/e_f)/log 2
- 圖解法：Δt = M⁻³、M³/8 步到 t = 0.125，與精確解比較，取最細三層的最小平方斜率

追蹤的五個量：ψ、A、γ、curl γ、div A。
"""

from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd
from loguru import logger

from src.fem.assembly import QuadratureContext
from src.fem.fields import Field, l2_error
from src.mesh.generators import generate_unit_cube_mesh, generate_unit_square_mesh
from src.mesh.mesh import Mesh, barycentric, locate_points
from src.tdgl.solver import TdglState, TdglSystem, step, with_fields
from src.utils import timeit
from .manufactured import ManufacturedCase

QUANTITIES = ('psi', 'A', 'gamma', 'curl_gamma', 'div_A')

# 量 → (狀態欄位, 場量, 精確解鍵)
_QUANTITY_SPEC = {
    'psi': ('psi', 'value', 'psi'),
    'A': ('A', 'value', 'A'),
    'gamma': ('gamma', 'value', 'gamma'),
    'curl_gamma': ('gamma', 'curl', 'curl_gamma'),
    'div_A': ('A', 'div', 'div_A'),
}

REPORT_COLUMNS = ['quantity', 'M', 'error', 'order_method', 'order']


@dataclass
class ConvergenceReport:
    """每層誤差與各量的估計階數"""
    case: str
    omega: float
    order: int
    method: str
    levels: List[int]
    errors: Dict[str, List[float]]
    orders: Dict[str, float]
    segment_orders: Dict[str, List[float]] = field(default_factory=dict)
    gamma_time_integrated: List[float] = field(default_factory=list)

    def to_frame(self) -> pd.DataFrame:
        """CSV 欄位：quantity, M, error, order_method, order"""
        rows = [
            {'quantity': q, 'M': M, 'error': err, 'order_method': self.method, 'order': self.orders[q]}
            for q in QUANTITIES if q in self.errors
            for M, err in zip(self.levels, self.errors[q])
        ]
        return pd.DataFrame(rows, columns=REPORT_COLUMNS)

    def summary(self) -> Dict[str, float]:
        return {q: round(self.orders[q], 4) for q in QUANTITIES if q in self.orders}


def richardson_order(e_coarse: float, e_fine: float) -> float:
    """
    p = log(e_coarse / e_fine) / log 2

    Raises:
        ValueError: 輸入非正
    """
    if not (e_coarse > 0 and e_fine > 0) or not np.isfinite(e_coarse) or not np.isfinite(e_fine):
        raise ValueError(f"Richardson 階數需要正的誤差: ({e_coarse}, {e_fine})")
    return float(np.log(e_coarse / e_fine) / np.log(2.0))


def least_squares_slope(levels: Sequence[int], errors: Sequence[float]) -> float:
    """log(誤差) 對 log(Δx) 的最小平方斜率，Δx = 1/M"""
    log_h = np.log(1.0 / np.asarray(levels, dtype=float))
    log_e = np.log(np.asarray(errors, dtype=float))
    return float(np.polyfit(log_h, log_e, 1)[0])


# ============================================================================
# 模擬
# ============================================================================

def unit_mesh(dim: int, M: int) -> Mesh:
    return generate_unit_square_mesh(M) if dim == 2 else generate_unit_cube_mesh(M)


def exact_state(case: ManufacturedCase, system: TdglSystem, t: float = 0.0, n: int = 0) -> TdglState:
    """以精確解插值建立狀態"""
    psi = system.psi_space.interpolate_dofs(lambda x: case.exact('psi', x, t))
    A = system.A_space.interpolate_dofs(lambda x: case.exact('A', x, t))
    gamma = system.gamma_space.interpolate_dofs(lambda x: case.exact('gamma', x, t))
    base = TdglState(psi=Field.zeros(system.psi_space, complex), A=Field.zeros(system.A_space),
                     gamma=Field.zeros(system.gamma_space), t=t, n=n, system=system)
    return with_fields(base, psi, A, gamma, t, n)


def simulate_case(case: ManufacturedCase, mesh: Mesh, dt: float, n_steps: int, order: int,
                  track_gamma: bool = False,
                  memory_budget_mb: Optional[float] = None) -> Tuple[TdglState, Optional[float]]:
    """
    自精確初始資料推進 n_steps 步

    Returns:
        (最終狀態, √(Δt Σ‖γⁿ − curl Aⁿ‖²)，未追蹤時為 None)
    """
    params = case.params(dt, order)
    system = TdglSystem(mesh, params, memory_budget_mb)
    state = exact_state(case, system)
    accumulated = 0.0
    for _ in range(n_steps):
        state = step(state, params)
        if track_gamma:
            t = state.t
            err = l2_error(state.gamma, lambda x: case.exact('gamma', x, t), ctx=system.ctx)
            accumulated += dt * err ** 2
    return state, (float(np.sqrt(accumulated)) if track_gamma else None)


def _quad_degree(state: TdglState) -> int:
    return 2 * max(state.gamma.space.order, 1) + 2


def exact_errors(case: ManufacturedCase, state: TdglState) -> Dict[str, float]:
    """五個量對精確解的 L² 誤差"""
    ctx = QuadratureContext(state.mesh, _quad_degree(state))
    t = state.t
    out = {}
    for q, (attr, kind, key) in _QUANTITY_SPEC.items():
        out[q] = l2_error(getattr(state, attr), lambda x, key=key: case.exact(key, x, t), kind=kind, ctx=ctx)
    return out


def mesh_difference(coarse: Field, fine: Field, kind: str = 'value',
                    degree: Optional[int] = None) -> float:
    """
    ‖u_fine − u_coarse‖，在細網格的求積點上計算

    細網格 cell 以重心定位其所在的粗網格 cell（巢狀網格時是精確的）。
    """
    fine_mesh, coarse_mesh = fine.space.mesh, coarse.space.mesh
    ctx = QuadratureContext(fine_mesh, degree or 2 * max(fine.space.order, 1) + 2)
    parents, _ = locate_points(coarse_mesh, fine_mesh.cell_centroids)
    cells = np.repeat(parents, ctx.n_points)
    x = ctx.x.reshape(-1, fine_mesh.dim)
    refs = barycentric(coarse_mesh, cells, x)
    coarse_vals = coarse.evaluate_at(cells, refs, kind)
    coarse_vals = coarse_vals.reshape((ctx.n_cells, ctx.n_points) + coarse_vals.shape[1:])
    sq = np.abs(ctx.evaluate(fine, kind) - coarse_vals) ** 2
    if sq.ndim == 3:
        sq = sq.sum(axis=-1)
    return float(np.sqrt(max(ctx.integrate(sq).real, 0.0)))


def solution_differences(coarse: TdglState, fine: TdglState) -> Dict[str, float]:
    """五個量在兩層網格之間的 L² 差"""
    degree = _quad_degree(fine)
    return {
        q: mesh_difference(getattr(coarse, attr), getattr(fine, attr), kind, degree)
        for q, (attr, kind, _) in _QUANTITY_SPEC.items()
    }


# ============================================================================
# 研究
# ============================================================================

@timeit
def richardson_study(case: ManufacturedCase, omega: float, M: int, dt: float, n_steps: int,
                     order: int, memory_budget_mb: Optional[float] = None) -> ConvergenceReport:
    """
    網格 M、2M、4M，固定 Δt 與步數

    報表中 2M 列為 ‖u_{2M} − u_M‖，4M 列為 ‖u_{4M} − u_{2M}‖。
    """
    if M < 1:
        raise ValueError(f"M 必須為正: {M}")
    case = case.with_omega(omega)
    levels = [M, 2 * M, 4 * M]
    states = []
    for m in levels:
        logger.info(f"Richardson: {case.name}, ω={omega:g}, r={order}, M={m}")
        state, _ = simulate_case(case, unit_mesh(case.dim, m), dt, n_steps, order,
                                 memory_budget_mb=memory_budget_mb)
        states.append(state)

    coarse_diff = solution_differences(states[0], states[1])
    fine_diff = solution_differences(states[1], states[2])
    errors = {q: [coarse_diff[q], fine_diff[q]] for q in QUANTITIES}
    orders = {q: richardson_order(coarse_diff[q], fine_diff[q]) for q in QUANTITIES}
    report = ConvergenceReport(case=case.name, omega=omega, order=order, method='richardson',
                               levels=levels[1:], errors=errors, orders=orders)
    logger.info(f"Richardson 階數 (ω={omega:g}): {report.summary()}")
    return report


@timeit
def graphical_study(case: ManufacturedCase, omega: float, M_list: Sequence[int], order: int,
                    t_final: float = 0.125, interpolate_only: bool = False,
                    memory_budget_mb: Optional[float] = None) -> ConvergenceReport:
    """
    Δt = M⁻³，推進到 t_final 後與精確解比較

    Args:
        interpolate_only: 不經過求解器，直接以 t_final 的精確解插值作為數值解
    """
    M_list = [int(m) for m in M_list]
    if len(M_list) < 2 or any(b <= a for a, b in zip(M_list, M_list[1:])):
        raise ValueError(f"M 列表必須嚴格遞增且至少兩層: {M_list}")
    case = case.with_omega(omega)

    errors: Dict[str, List[float]] = {q: [] for q in QUANTITIES}
    gamma_integrated: List[float] = []
    for m in M_list:
        mesh = unit_mesh(case.dim, m)
        if interpolate_only:
            system = TdglSystem(mesh, case.params(1.0, order), memory_budget_mb)
            state = exact_state(case, system, t=t_final)
        else:
            dt = float(m) ** -3
            n_steps = int(round(t_final / dt))
            logger.info(f"圖解法: {case.name}, ω={omega:g}, r={order}, M={m}, {n_steps} 步")
            state, integrated = simulate_case(case, mesh, dt, n_steps, order, track_gamma=True,
                                              memory_budget_mb=memory_budget_mb)
            gamma_integrated.append(integrated)
        for q, err in exact_errors(case, state).items():
            errors[q].append(err)

    finest = M_list[-3:]
    orders = {q: least_squares_slope(finest, errors[q][-3:]) for q in QUANTITIES}
    segments = {
        q: [float(np.log(errors[q][i] / errors[q][i + 1]) / np.log(M_list[i + 1] / M_list[i]))
            for i in range(len(M_list) - 1)]
        for q in QUANTITIES
    }
    report = ConvergenceReport(case=case.name, omega=omega, order=order, method='graphical',
                               levels=M_list, errors=errors, orders=orders,
                               segment_orders=segments, gamma_time_integrated=gamma_integrated)
    logger.info(f"圖解法斜率 (ω={omega:g}): {report.summary()}")
    return report


def compare_methods(report_a: ConvergenceReport, report_b: ConvergenceReport) -> Dict[str, float]:
    """各量估計階數的絕對差"""
    common = [q for q in QUANTITIES if q in report_a.orders and q in report_b.orders]
    return {q: abs(report_a.orders[q] - report_b.orders[q]) for q in common}


def sweep_frame(reports: Sequence[ConvergenceReport]) -> pd.DataFrame:
    """多個 ω 的報表合併，依 ω 再依量排序"""
    frames = []
    for report in reports:
        frame = report.to_frame()
        frame.insert(0, 'omega', report.omega)
        frames.append(frame)
    if not frames:
        return pd.DataFrame(columns=['omega'] + REPORT_COLUMNS)
    combined = pd.concat(frames, ignore_index=True)
    combined['_q'] = combined['quantity'].map({q: i for i, q in enumerate(QUANTITIES)})
    combined = combined.sort_values(['omega', '_q', 'M'], ascending=[False, True, True], kind='mergesort')
    return combined.drop(columns='_q').reset_index(drop=True)
