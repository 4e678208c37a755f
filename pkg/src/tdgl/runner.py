"""
時間推進驅動與觀測器

觀測器沿用模組註冊表的做法：每種觀測器是一個 Observer 子類別，
透過 ObserverRegistry 以名稱建立；run() 依觀測週期呼叫它們並把結果
累積成 ObservableLog（可轉成 pandas DataFrame）。
"""

from abc import ABC, abstractmethod
from dataclasses import dataclass, field
from typing import Any, Callable, Dict, List, Optional, Sequence, Tuple, Type

import numpy as np
import pandas as pd
from loguru import logger

from src.data_models import TdglParams
from src.mesh.mesh import Mesh
from src.utils import timeit
from .observables import (
    count_vortices, gibbs_energy, normal_zone_fraction, relative_energy_difference,
)
from .solver import SimulationDivergedError, TdglState, init_state, step

OBSERVABLE_COLUMNS = ['step', 't', 'omega', 'energy', 'rel_energy_diff',
                      'vortex_count', 'normal_zone_fraction']


# ============================================================================
# 觀測器
# ============================================================================

class Observer(ABC):
    """觀測器基類"""

    name: str = "observer"

    @abstractmethod
    def observe(self, state: TdglState, params: TdglParams,
                previous: Optional[TdglState], record: Dict[str, Any]) -> None:
        """把觀測值寫入 record；previous 為前一步的狀態（初始觀測時為 None）"""


class EnergyObserver(Observer):
    """Gibbs 自由能與相對能量差 |G_{n+1} − G_n| / G_n"""

    name = "energy"

    def observe(self, state, params, previous, record):
        energy = gibbs_energy(state, params)
        record['energy'] = energy
        if previous is not None:
            record['rel_energy_diff'] = relative_energy_difference(gibbs_energy(previous, params), energy)


class VortexObserver(Observer):
    """相位繞數渦旋數（僅 2D）"""

    name = "vortex"

    def __init__(self, threshold: float = 0.3):
        self.threshold = threshold

    def observe(self, state, params, previous, record):
        if state.mesh.dim != 2:
            return
        result = count_vortices(state.psi, self.threshold)
        record['vortex_count'] = result.count
        if result.count != result.threshold_count:
            logger.debug(f"渦旋數 {result.count} 與低 |ψ| 區域數 {result.threshold_count} 不一致")


class NormalZoneObserver(Observer):
    """凹角附近的正常區比例"""

    name = "normal_zone"

    def __init__(self, corner: Tuple[float, float], radius: float, threshold: float = 0.1):
        self.corner = corner
        self.radius = radius
        self.threshold = threshold

    def observe(self, state, params, previous, record):
        record['normal_zone_fraction'] = normal_zone_fraction(
            state.psi, self.corner, self.radius, self.threshold)


class SnapshotObserver(Observer):
    """每 every 步把狀態交給 sink（例如 VTK 輸出）"""

    name = "snapshot"

    def __init__(self, sink: Callable[[TdglState, TdglParams], None], every: int = 1):
        if every < 1:
            raise ValueError(f"快照週期必須為正: {every}")
        self.sink = sink
        self.every = every

    def observe(self, state, params, previous, record):
        if state.n % self.every == 0:
            self.sink(state, params)


class ObserverRegistry:
    """觀測器註冊表"""

    def __init__(self):
        self.observers: Dict[str, Type[Observer]] = {}

    def register(self, observer_class: Type[Observer]) -> None:
        self.observers[observer_class.name] = observer_class
        logger.debug(f"註冊觀測器: {observer_class.name}")

    def create(self, name: str, **kwargs) -> Observer:
        if name not in self.observers:
            raise KeyError(f"未知的觀測器: {name}")
        return self.observers[name](**kwargs)

    def list_observers(self) -> List[str]:
        return sorted(self.observers)


registry = ObserverRegistry()
for _cls in (EnergyObserver, VortexObserver, NormalZoneObserver, SnapshotObserver):
    registry.register(_cls)


# ============================================================================
# 觀測紀錄
# ============================================================================

@dataclass
class ObservableLog:
    """逐次觀測紀錄"""
    records: List[Dict[str, Any]] = field(default_factory=list)
    final_state: Optional[TdglState] = None

    def append(self, record: Dict[str, Any]) -> None:
        self.records.append(record)

    def __len__(self) -> int:
        return len(self.records)

    def to_frame(self) -> pd.DataFrame:
        """固定欄位順序的 DataFrame；未記錄的量為 NaN"""
        frame = pd.DataFrame(self.records, columns=OBSERVABLE_COLUMNS)
        return frame.astype({'step': 'int64'}) if len(frame) else frame

    def energy_trend_ok(self) -> Optional[bool]:
        """
        梯度流趨勢檢查（軟性）

        最後 10% 觀測中的最大相對能量差須低於執行 10% 處的值；觀測太少時回傳 None。
        """
        diffs = self.to_frame()['rel_energy_diff'].dropna().to_numpy()
        if len(diffs) < 10:
            return None
        tail = diffs[-max(1, len(diffs) // 10):]
        reference = diffs[len(diffs) // 10]
        return bool(tail.max() < reference)


# ============================================================================
# 執行
# ============================================================================

def omega_schedule_value(schedule: Sequence[Tuple[int, float]], n: int, default: float) -> float:
    """分段常數 ω(n)"""
    current = default
    for start, value in sorted(schedule):
        if n >= start:
            current = value
    return current


def _observe(state, params, previous, observers) -> Dict[str, Any]:
    record: Dict[str, Any] = {'step': state.n, 't': state.t, 'omega': params.omega}
    for observer in observers:
        observer.observe(state, params, previous, record)
    return record


@timeit
def run(mesh: Mesh, params: TdglParams, n_steps: int,
        observers: Optional[Sequence[Observer]] = None,
        state: Optional[TdglState] = None,
        omega_schedule: Optional[Sequence[Tuple[int, float]]] = None,
        observe_every: int = 1,
        psi_bound: float = 2.0,
        memory_budget_mb: Optional[float] = None) -> ObservableLog:
    """
    推進 n_steps 步並記錄觀測量

    Args:
        state: 熱啟動狀態（預設為 ψ ≡ 1、A ≡ 0、γ ≡ 0）
        omega_schedule: [(起始步, ω), ...]，以絕對步數計
        observe_every: 觀測週期；初始狀態與最後一步一定會觀測
        psi_bound: 自由度上 |ψ| 的上界，超過即視為發散

    Raises:
        SimulationDivergedError: 出現 NaN 或 |ψ| 超過上界
    """
    if n_steps < 0:
        raise ValueError(f"步數不可為負: {n_steps}")
    if observe_every < 1:
        raise ValueError(f"觀測週期必須為正: {observe_every}")
    observers = list(observers) if observers is not None else [EnergyObserver()]

    if state is None:
        state = init_state(mesh, params, memory_budget_mb)
    if omega_schedule:
        params = params.with_omega(omega_schedule_value(omega_schedule, state.n, params.omega))
    # 傳入的 state 可能以其他參數分解過
    state.system.factorize(params)

    log = ObservableLog()
    log.append(_observe(state, params, None, observers))
    last_n = state.n + n_steps
    logger.info(f"開始模擬: {n_steps} 步, κ={params.kappa:g}, ω={params.omega:g}, δt={params.dt:g}")

    while state.n < last_n:
        if omega_schedule:
            omega = omega_schedule_value(omega_schedule, state.n, params.omega)
            if omega != params.omega:
                logger.info(f"第 {state.n} 步切換 ω: {params.omega:g} → {omega:g}")
                params = params.with_omega(omega)
                state.system.factorize(params)
        previous, state = state, step(state, params)
        psi_max = float(np.abs(state.psi.coeffs).max())
        if psi_max > psi_bound:
            raise SimulationDivergedError(f"max|ψ| = {psi_max:.3g} 超過 {psi_bound:g}", state.n)
        if state.n % observe_every == 0 or state.n == last_n:
            record = _observe(state, params, previous, observers)
            log.append(record)
            logger.info(
                f"step {state.n}: t={state.t:.6g}, G={record.get('energy', float('nan')):.8g}, "
                f"ΔG/G={record.get('rel_energy_diff', float('nan')):.3e}"
            )

    log.final_state = state
    trend = log.energy_trend_ok()
    if trend is not None:
        logger.info(f"能量趨勢檢查: {'通過' if trend else '未通過'}")
    return log
