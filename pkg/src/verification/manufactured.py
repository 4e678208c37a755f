"""
人造解（MMS）

以 sympy 將精確解代入 ω 規範 TDGL 方程的左端，得到源項 g（ψ 方程）與 f（A 方程）：

    g = ψ_t − Δψ/κ² − iκω div A ψ + (i/κ) ψ div A + (2i/κ) A·∇ψ − (1 − |A|² − |ψ|²) ψ
    f = A_t − ω ∇div A + curl curl A − J + |ψ|² A − curl H,   J = Im(ψ*∇ψ)/κ

外加場取 H = curl A。另提供以高階有限差分計算殘差的獨立檢查（不經過 sympy）。
"""

from dataclasses import dataclass
from functools import lru_cache
from typing import Callable, Dict, List, Sequence, Tuple

import numpy as np
import sympy
from loguru import logger

from src.data_models import TdglParams

X, Y, Z, T = sympy.symbols('x y z t', real=True)
KAPPA, OMEGA = sympy.symbols('kappa omega', positive=True)
SPACE = (X, Y, Z)


# ============================================================================
# 符號運算
# ============================================================================

def _grad(expr, dim: int) -> List:
    return [sympy.diff(expr, s) for s in SPACE[:dim]]


def _div(vec: Sequence, dim: int):
    return sum(sympy.diff(vec[k], SPACE[k]) for k in range(dim))


def _curl(vec, dim: int):
    """2D：向量 → 純量 ∂xA₂ − ∂yA₁；純量 → (∂y, −∂x)。3D：向量 curl"""
    if dim == 2:
        if isinstance(vec, (list, tuple)):
            return sympy.diff(vec[1], X) - sympy.diff(vec[0], Y)
        return [sympy.diff(vec, Y), -sympy.diff(vec, X)]
    return [sympy.diff(vec[2], Y) - sympy.diff(vec[1], Z),
            sympy.diff(vec[0], Z) - sympy.diff(vec[2], X),
            sympy.diff(vec[1], X) - sympy.diff(vec[0], Y)]


class ManufacturedSolution:
    """
    精確解 (ψ = u + iv, A) 與推導出的源項，κ 與 ω 保留為符號

    Args:
        name: 名稱（報表用）
        dim: 空間維度
        psi_re, psi_im: ψ 的實部與虛部
        A: A 的分量
    """

    def __init__(self, name: str, dim: int, psi_re, psi_im, A: Sequence):
        self.name = name
        self.dim = dim
        u, v = sympy.sympify(psi_re), sympy.sympify(psi_im)
        A = [sympy.sympify(a) for a in A]
        if len(A) != dim:
            raise ValueError(f"A 的分量數 {len(A)} 與維度 {dim} 不符")

        psi = u + sympy.I * v
        grad_psi = _grad(psi, dim)
        lap_psi = sum(sympy.diff(g, s) for g, s in zip(grad_psi, SPACE))
        div_A = _div(A, dim)
        A_dot_grad = sum(a * g for a, g in zip(A, grad_psi))
        psi_sq = u ** 2 + v ** 2
        A_sq = sum(a ** 2 for a in A)

        gamma = _curl(A, dim)
        curl_gamma = _curl(gamma, dim)
        H, curl_H = gamma, curl_gamma
        J = [(u * dv - v * du) / KAPPA for du, dv in zip(_grad(u, dim), _grad(v, dim))]
        grad_div_A = _grad(div_A, dim)

        g = (sympy.diff(psi, T) - lap_psi / KAPPA ** 2 - sympy.I * KAPPA * OMEGA * div_A * psi
             + sympy.I / KAPPA * psi * div_A + 2 * sympy.I / KAPPA * A_dot_grad
             - (1 - A_sq - psi_sq) * psi)
        f = [sympy.diff(A[k], T) - OMEGA * grad_div_A[k] + curl_gamma[k] - J[k]
             + psi_sq * A[k] - curl_H[k] for k in range(dim)]

        self.expressions: Dict[str, object] = {
            'psi': psi, 'A': A, 'div_A': div_A, 'gamma': gamma,
            'curl_gamma': curl_gamma, 'H': H, 'curl_H': curl_H, 'g': g, 'f': f,
        }
        self._compiled = {key: self._compile(expr) for key, expr in self.expressions.items()}
        logger.debug(f"人造解 {name} 已編譯 ({dim}D)")

    def _compile(self, expr) -> Callable:
        args = (*SPACE[:self.dim], T, KAPPA, OMEGA)
        if isinstance(expr, list):
            parts = [sympy.lambdify(args, e, 'numpy') for e in expr]
            return lambda *a: [p(*a) for p in parts]
        return sympy.lambdify(args, expr, 'numpy')

    def evaluate(self, key: str, x: np.ndarray, t: float, kappa: float, omega: float) -> np.ndarray:
        """在點 x（形狀 (..., d)）評估；向量量回傳 (..., d)"""
        x = np.asarray(x, dtype=float)
        shape = x.shape[:-1]
        coords = [x[..., k] for k in range(self.dim)]
        out = self._compiled[key](*coords, t, kappa, omega)
        if isinstance(out, list):
            return np.stack([np.broadcast_to(np.asarray(o), shape) for o in out], axis=-1)
        return np.broadcast_to(np.asarray(out), shape).copy()


@lru_cache(maxsize=None)
def solution_2d() -> ManufacturedSolution:
    """ψ = e^{−t}(cos πx + i cos πy)，A = (e^{y−t} sin πx, e^{x−t} sin πy)"""
    pi = sympy.pi
    return ManufacturedSolution(
        'tdgl-2d', 2,
        sympy.exp(-T) * sympy.cos(pi * X),
        sympy.exp(-T) * sympy.cos(pi * Y),
        [sympy.exp(Y - T) * sympy.sin(pi * X), sympy.exp(X - T) * sympy.sin(pi * Y)],
    )


@lru_cache(maxsize=None)
def solution_3d() -> ManufacturedSolution:
    """ψ = e^t cos πy cos πz + i e^t cos πx cos πz，A = e^t (sin πx sin πy, sin πy sin πz, sin πz)"""
    pi = sympy.pi
    e = sympy.exp(T)
    return ManufacturedSolution(
        'tdgl-3d', 3,
        e * sympy.cos(pi * Y) * sympy.cos(pi * Z),
        e * sympy.cos(pi * X) * sympy.cos(pi * Z),
        [e * sympy.sin(pi * X) * sympy.sin(pi * Y),
         e * sympy.sin(pi * Y) * sympy.sin(pi * Z),
         e * sympy.sin(pi * Z)],
    )


@lru_cache(maxsize=None)
def solution_heat_2d() -> ManufacturedSolution:
    """A ≡ 0 的 ψ 方程（熱方程加非線性項），用來單獨檢查有限元素層"""
    pi = sympy.pi
    return ManufacturedSolution(
        'heat-2d', 2,
        sympy.exp(-T) * sympy.cos(pi * X),
        sympy.exp(-T) * sympy.cos(pi * Y),
        [sympy.Integer(0), sympy.Integer(0)],
    )


SOLUTIONS: Dict[str, Callable[[], ManufacturedSolution]] = {
    'tdgl-2d': solution_2d,
    'tdgl-3d': solution_3d,
    'heat-2d': solution_heat_2d,
}


# ============================================================================
# 人造案例（ForcingHooks 實作）
# ============================================================================

@dataclass(frozen=True)
class ManufacturedCase:
    """固定 κ、ω 的人造解，提供外加場與源項給求解器"""
    solution: ManufacturedSolution
    kappa: float = 1.0
    omega: float = 1.0

    @classmethod
    def create(cls, name: str, kappa: float = 1.0, omega: float = 1.0) -> 'ManufacturedCase':
        if name not in SOLUTIONS:
            raise KeyError(f"未知的人造解: {name}（可用: {sorted(SOLUTIONS)}）")
        return cls(SOLUTIONS[name](), kappa, omega)

    @property
    def dim(self) -> int:
        return self.solution.dim

    @property
    def name(self) -> str:
        return self.solution.name

    def with_omega(self, omega: float) -> 'ManufacturedCase':
        return ManufacturedCase(self.solution, self.kappa, omega)

    def exact(self, key: str, x: np.ndarray, t: float) -> np.ndarray:
        return self.solution.evaluate(key, x, t, self.kappa, self.omega)

    def params(self, dt: float, order: int) -> TdglParams:
        return TdglParams(kappa=self.kappa, omega=self.omega, H=0.0, dt=dt, order=order, forcing=self)

    # ForcingHooks
    def applied_field(self, x: np.ndarray, t: float) -> np.ndarray:
        return self.exact('H', x, t)

    def applied_field_curl(self, x: np.ndarray, t: float) -> np.ndarray:
        return self.exact('curl_H', x, t)

    def source_psi(self, x: np.ndarray, t: float) -> np.ndarray:
        return self.exact('g', x, t)

    def source_A(self, x: np.ndarray, t: float) -> np.ndarray:
        return self.exact('f', x, t)


def forcing_2d(x, y, t, kappa: float, omega: float) -> Tuple[np.ndarray, np.ndarray]:
    """2D 人造系統的 (g, f)，f 形狀 (..., 2)"""
    pts = np.stack(np.broadcast_arrays(np.asarray(x, float), np.asarray(y, float)), axis=-1)
    sol = solution_2d()
    return sol.evaluate('g', pts, t, kappa, omega), sol.evaluate('f', pts, t, kappa, omega)


def forcing_3d(x, y, z, t, kappa: float, omega: float) -> Tuple[np.ndarray, np.ndarray]:
    """3D 人造系統的 (g, f)，f 形狀 (..., 3)"""
    pts = np.stack(np.broadcast_arrays(*(np.asarray(c, float) for c in (x, y, z))), axis=-1)
    sol = solution_3d()
    return sol.evaluate('g', pts, t, kappa, omega), sol.evaluate('f', pts, t, kappa, omega)


# ============================================================================
# 有限差分殘差檢查
# ============================================================================

FD_FIRST = np.array([-1 / 60, 3 / 20, -3 / 4, 0.0, 3 / 4, -3 / 20, 1 / 60])
FD_OFFSETS = np.arange(-3, 4)


def _fd(fn: Callable[[np.ndarray, float], np.ndarray], x: np.ndarray, t: float,
        axis: int, h: float) -> np.ndarray:
    """6 階中央差分 ∂fn/∂x_axis；axis = −1 表示對時間微分"""
    total = 0.0
    for c, k in zip(FD_FIRST, FD_OFFSETS):
        if c == 0.0:
            continue
        if axis < 0:
            total = total + c * fn(x, t + k * h)
        else:
            shifted = x.copy()
            shifted[..., axis] += k * h
            total = total + c * fn(shifted, t)
    return total / h


def _fd_grad(fn, x, t, dim, h):
    return np.stack([_fd(fn, x, t, k, h) for k in range(dim)], axis=-1)


def _fd_div(fn, x, t, dim, h):
    return sum(_fd(lambda p, s, k=k: fn(p, s)[..., k], x, t, k, h) for k in range(dim))


def _fd_curl(fn, x, t, dim, h):
    """與符號 _curl 相同的約定"""
    def d(comp, axis):
        if comp is None:
            return _fd(fn, x, t, axis, h)
        return _fd(lambda p, s: fn(p, s)[..., comp], x, t, axis, h)
    sample = fn(x, t)
    if dim == 2:
        if sample.ndim == x.ndim:
            return d(1, 0) - d(0, 1)
        return np.stack([d(None, 1), -d(None, 0)], axis=-1)
    return np.stack([d(2, 1) - d(1, 2), d(0, 2) - d(2, 0), d(1, 0) - d(0, 1)], axis=-1)


def forcing_residual(case: ManufacturedCase, x: np.ndarray, t: float, h: float = 1e-3) -> Tuple[float, float]:
    """
    將精確解代入方程（導數以有限差分計算）並扣除源項後的最大殘差

    ψ 方程使用協變形式 (∇/κ − iA)·(∇/κ − iA)ψ，與推導源項時的展開式互相獨立。

    Returns:
        (ψ 方程殘差, A 方程殘差)
    """
    dim, kappa, omega = case.dim, case.kappa, case.omega
    psi = lambda p, s: case.exact('psi', p, s)
    A = lambda p, s: case.exact('A', p, s)
    H = lambda p, s: case.exact('H', p, s)

    def covariant(p, s):
        return _fd_grad(psi, p, s, dim, h) / kappa - 1j * A(p, s) * psi(p, s)[..., None]

    def div_A(p, s):
        return _fd_div(A, p, s, dim, h)

    psi_x, A_x = psi(x, t), A(x, t)
    q = covariant(x, t)
    D2 = _fd_div(covariant, x, t, dim, h) / kappa - 1j * np.sum(A_x * q, axis=-1)
    lhs_psi = (_fd(psi, x, t, -1, h) - 1j * kappa * omega * div_A(x, t) * psi_x
               - D2 - (1.0 - np.abs(psi_x) ** 2) * psi_x)
    res_psi = np.abs(lhs_psi - case.exact('g', x, t))

    grad_psi = _fd_grad(psi, x, t, dim, h)
    J = np.imag(np.conj(psi_x)[..., None] * grad_psi) / kappa
    curl_A = lambda p, s: _fd_curl(A, p, s, dim, h)
    lhs_A = (_fd(A, x, t, -1, h) - omega * _fd_grad(div_A, x, t, dim, h)
             + _fd_curl(curl_A, x, t, dim, h) - J + (np.abs(psi_x) ** 2)[..., None] * A_x)
    rhs_A = case.exact('f', x, t) + _fd_curl(H, x, t, dim, h)
    res_A = np.linalg.norm(lhs_A - rhs_A, axis=-1)
    return float(res_psi.max()), float(res_A.max())


def check_forcing(case: ManufacturedCase, n_points: int = 100, seed: int = 0,
                  h: float = 1e-3, tol: float = 1e-6) -> Dict[str, float]:
    """
    在隨機時空取樣點上檢查源項

    Raises:
        AssertionError: 殘差超過 tol
    """
    rng = np.random.default_rng(seed)
    margin = 4 * h
    x = rng.uniform(margin, 1.0 - margin, size=(n_points, case.dim))
    t = rng.uniform(margin, 1.0 - margin, size=n_points)
    worst_psi = worst_A = 0.0
    for xi, ti in zip(x, t):
        r_psi, r_A = forcing_residual(case, xi[None, :], float(ti), h)
        worst_psi, worst_A = max(worst_psi, r_psi), max(worst_A, r_A)
    result = {'psi': worst_psi, 'A': worst_A}
    logger.info(f"源項殘差 {case.name} (ω={case.omega:g}): ψ {worst_psi:.2e}, A {worst_A:.2e}")
    if max(worst_psi, worst_A) >= tol:
        raise AssertionError(f"源項殘差超過 {tol:g}: {result}")
    return result
