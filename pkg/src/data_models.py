"""
TDGL 求解器的共用資料模型

這個模組集中定義跨模組使用的不可變資料結構：
- 幾何參數（帶缺口圓盤）
- 有限元素空間族群與數值型別
- 物理與離散參數（κ、ω、H、δt、r）
- 命令列執行設定
"""

import math
from dataclasses import dataclass, field, replace, asdict
from enum import Enum
from typing import Any, Dict, Optional, Protocol, Tuple, Union

import numpy as np


class ElementFamily(Enum):
    """有限元素族群枚舉"""
    LAGRANGE = "Lagrange"
    RAVIART_THOMAS = "RaviartThomas"
    NEDELEC = "Nedelec"


class ValueKind(Enum):
    """場值型別枚舉"""
    REAL_SCALAR = "real-scalar"
    COMPLEX_SCALAR = "complex-scalar"
    REAL_VECTOR = "real-vector"


class Subcommand(Enum):
    """命令列子指令枚舉"""
    MMS = "mms"
    BENCH_DISK = "bench-disk"
    BENCH_CUBE = "bench-cube"
    BENCH_SPHERE = "bench-sphere"
    ORDERS = "orders"
    RESUME = "resume"


# ============================================================================
# 幾何
# ============================================================================

@dataclass(frozen=True)
class NotchedDiskGeometry:
    """帶楔形缺口的圓盤幾何（長度單位為 λ）"""
    radius: float = 5.0
    notch_depth: float = 1.0
    notch_half_angle: float = math.pi / 8
    target_h: float = 1.0 / 12.0

    def __post_init__(self):
        if not 0.0 < self.notch_depth < self.radius:
            raise ValueError(f"缺口深度必須介於 0 與半徑之間: d={self.notch_depth}, R={self.radius}")
        if not 0.0 < self.notch_half_angle < math.pi / 2:
            raise ValueError(f"缺口半角必須介於 0 與 π/2 之間: {self.notch_half_angle}")
        if not 0.0 < self.target_h < self.notch_depth:
            raise ValueError(f"目標網格尺寸必須小於缺口深度: h={self.target_h}, d={self.notch_depth}")

    @classmethod
    def from_nodes_per_xi(cls, radius: float, kappa: float, nodes_per_xi: float,
                          notch_depth: float = 1.0,
                          notch_half_angle: float = math.pi / 8) -> 'NotchedDiskGeometry':
        """以每個相干長度 ξ = 1/κ 的節點數決定網格尺寸"""
        return cls(radius=radius, notch_depth=notch_depth,
                   notch_half_angle=notch_half_angle,
                   target_h=(1.0 / kappa) / nodes_per_xi)

    @property
    def apex(self) -> Tuple[float, float]:
        """凹角頂點座標"""
        return (self.radius - self.notch_depth, 0.0)

    @property
    def chord_parameter(self) -> float:
        """從頂點沿缺口邊到圓周的距離"""
        a = self.radius - self.notch_depth
        c = math.cos(self.notch_half_angle)
        return -a * c + math.sqrt((a * c) ** 2 - a * a + self.radius ** 2)

    @property
    def rim_angle(self) -> float:
        """缺口邊與圓周交點的極角"""
        s = self.chord_parameter
        a = self.radius - self.notch_depth
        return math.atan2(s * math.sin(self.notch_half_angle), a + s * math.cos(self.notch_half_angle))

    @property
    def area(self) -> float:
        """解析面積：圓面積扣除弓形與三角形"""
        R = self.radius
        theta = self.rim_angle
        segment = 0.5 * R * R * (2.0 * theta - math.sin(2.0 * theta))
        triangle = R * math.sin(theta) * (R * math.cos(theta) - (R - self.notch_depth))
        return math.pi * R * R - segment - triangle


# ============================================================================
# 物理參數
# ============================================================================

class ForcingHooks(Protocol):
    """人造解的外加場與源項介面"""

    def applied_field(self, x: np.ndarray, t: float) -> np.ndarray: ...

    def applied_field_curl(self, x: np.ndarray, t: float) -> np.ndarray: ...

    def source_psi(self, x: np.ndarray, t: float) -> np.ndarray: ...

    def source_A(self, x: np.ndarray, t: float) -> np.ndarray: ...


@dataclass(frozen=True)
class TdglParams:
    """無因次 TDGL 參數"""
    kappa: float
    omega: float
    H: Union[float, Tuple[float, ...]] = 0.0
    dt: float = 1.0
    order: int = 1
    forcing: Optional[ForcingHooks] = field(default=None, compare=False, repr=False)

    def __post_init__(self):
        if not self.kappa > 0:
            raise ValueError(f"κ 必須為正: {self.kappa}")
        if not self.omega >= 0:
            raise ValueError(f"ω 必須非負: {self.omega}")
        if not self.dt > 0:
            raise ValueError(f"δt 必須為正: {self.dt}")
        if isinstance(self.H, (list, np.ndarray)):
            object.__setattr__(self, 'H', tuple(float(h) for h in self.H))

    def with_omega(self, omega: float) -> 'TdglParams':
        """回傳僅改變 ω 的新參數"""
        return replace(self, omega=omega)

    def applied_field(self, x: np.ndarray, t: float) -> np.ndarray:
        """在點 x（形狀 (..., d)）評估外加場 H"""
        if self.forcing is not None:
            return self.forcing.applied_field(x, t)
        if isinstance(self.H, tuple):
            return np.broadcast_to(np.asarray(self.H, dtype=float), x.shape[:-1] + (3,)).copy()
        return np.full(x.shape[:-1], float(self.H))

    def applied_field_curl(self, x: np.ndarray, t: float) -> Optional[np.ndarray]:
        """curl H；常數外加場回傳 None"""
        if self.forcing is not None:
            return self.forcing.applied_field_curl(x, t)
        return None

    def to_dict(self) -> Dict[str, Any]:
        """可序列化的參數字典（不含源項）"""
        data = asdict(replace(self, forcing=None))
        data.pop('forcing', None)
        if isinstance(data['H'], tuple):
            data['H'] = list(data['H'])
        return data


# ============================================================================
# 執行設定
# ============================================================================

@dataclass(frozen=True)
class RunConfig:
    """命令列執行設定"""
    subcommand: Subcommand
    dim: int = 2
    order: int = 1
    omega: float = 1.0
    omega_schedule: Optional[Tuple[Tuple[int, float], ...]] = None
    omegas: Tuple[float, ...] = (1.0, 1e-1, 1e-2, 1e-3, 1e-4, 1e-5, 1e-6, 0.0)
    kappa: float = 1.0
    H: Tuple[float, ...] = (0.0,)
    dt: float = 1e-3
    n_steps: int = 125
    M: int = 16
    M_list: Tuple[int, ...] = (16, 32, 64)
    method: str = "richardson"
    radius: float = 5.0
    nodes_per_xi: float = 3.0
    notch_depth: float = 1.0
    notch_half_angle: float = math.pi / 8
    mesh_path: Optional[str] = None
    checkpoint: Optional[str] = None
    output_dir: str = "output"
    snapshot_every: int = 0
    observe_every: int = 1
    vortex_threshold: float = 0.3
    normal_zone_threshold: float = 0.1
    memory_budget_mb: float = 4096.0
    workers: int = 1
    strict: bool = False
    log_level: str = "INFO"
    # 設定檔或命令列明確指定的鍵（resume 用來比對檢查點參數）
    explicit_keys: Tuple[str, ...] = ()

    def applied_field(self) -> Union[float, Tuple[float, ...]]:
        """依維度回傳外加場（2D 為純量）"""
        if self.dim == 2:
            return float(self.H[0])
        values = tuple(self.H) + (0.0,) * (3 - len(self.H))
        if len(self.H) == 1:
            values = (0.0, 0.0, float(self.H[0]))
        return values

    def omega_at(self, step: int) -> float:
        """分段常數 ω 排程"""
        if not self.omega_schedule:
            return self.omega
        current = self.omega_schedule[0][1]
        for start, value in self.omega_schedule:
            if step >= start:
                current = value
        return current
