"""
有限元素場：插值、求積點評估與 L² 量測
"""

from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from .assembly import QuadratureContext
from .spaces import FunctionSpace


@dataclass(frozen=True, eq=False)
class Field:
    """空間上的係數向量"""
    space: FunctionSpace
    coeffs: np.ndarray

    def __post_init__(self):
        if self.coeffs.shape != (self.space.ndofs,):
            raise ValueError(f"係數長度 {self.coeffs.shape} 與自由度數 {self.space.ndofs} 不符")

    @classmethod
    def zeros(cls, space: FunctionSpace, dtype=float) -> 'Field':
        return cls(space, np.zeros(space.ndofs, dtype=dtype))

    @classmethod
    def constant(cls, space: FunctionSpace, value) -> 'Field':
        """常數 Lagrange 場"""
        dtype = complex if np.iscomplexobj(value) or space.is_complex else float
        return cls(space, np.full(space.ndofs, value, dtype=dtype))

    def evaluate_at(self, cells: np.ndarray, ref_points: np.ndarray, kind: str = 'value') -> np.ndarray:
        """在 (cell, 參考點) 配對上評估場"""
        tab = self.space.tabulate(cells, ref_points, derivatives=kind != 'value')
        local = self.coeffs[self.space.dof_map[cells]]
        if kind == 'value':
            data = tab.values[:, :, 0] if not self.space.element.is_vector else tab.values
        elif kind == 'grad':
            data = tab.grads[:, :, 0, :] if not self.space.element.is_vector else tab.grads
        elif kind == 'div':
            data = tab.div
        elif kind == 'curl':
            data = tab.curl
        else:
            raise ValueError(f"未知的場量: {kind}")
        return np.einsum('nl,nl...->n...', local, data)

    def cell_average(self, kind: str = 'value', degree: Optional[int] = None) -> np.ndarray:
        """每個 cell 上的平均值"""
        ctx = QuadratureContext(self.space.mesh, degree or 2 * max(self.space.order, 1))
        values = ctx.evaluate(self, kind)
        w = ctx.weights.reshape(ctx.weights.shape + (1,) * (values.ndim - 2))
        return np.sum(w * values, axis=1) / ctx.weights.sum(axis=1).reshape((-1,) + (1,) * (values.ndim - 2))


def interpolate(space: FunctionSpace, fn: Callable[[np.ndarray], np.ndarray]) -> Field:
    """
    以自由度泛函插值逐點函數

    Args:
        fn: fn(x)，x 形狀 (..., d)，回傳純量 (...) 或向量 (..., d)
    """
    return Field(space, space.interpolate_dofs(fn))


def l2_error(field: Field, exact: Callable[[np.ndarray], np.ndarray], degree: Optional[int] = None,
             kind: str = 'value', ctx: Optional[QuadratureContext] = None) -> float:
    """
    ‖u_h − u‖_{L²}，以求積計算（預設精確度 2r + 2）

    Args:
        exact: exact(x)，x 形狀 (C, Q, d)
        kind: 比較的場量（'value'、'div'、'curl'）
    """
    if ctx is None:
        ctx = QuadratureContext(field.space.mesh, degree or 2 * max(field.space.order, 1) + 2)
    diff = ctx.evaluate(field, kind) - np.asarray(exact(ctx.x))
    sq = np.abs(diff) ** 2
    if sq.ndim == 3:
        sq = sq.sum(axis=-1)
    return float(np.sqrt(max(ctx.integrate(sq).real, 0.0)))


def l2_norm(field: Field, degree: Optional[int] = None, kind: str = 'value',
            ctx: Optional[QuadratureContext] = None) -> float:
    """‖u_h‖_{L²}"""
    if ctx is None:
        ctx = QuadratureContext(field.space.mesh, degree or 2 * max(field.space.order, 1) + 2)
    sq = np.abs(ctx.evaluate(field, kind)) ** 2
    if sq.ndim == 3:
        sq = sq.sum(axis=-1)
    return float(np.sqrt(max(ctx.integrate(sq).real, 0.0)))
