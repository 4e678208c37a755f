"""
ω 規範下 TDGL 方程的全線性化混合有限元素格式

每一步分兩個階段，兩者的右端項都只使用第 n 步的 (ψⁿ, Aⁿ)：
- ψ 階段：((1/δt) M + (1/κ²) K) ψ^{n+1} = 右端項（實對稱，實部虛部分開求解）
- (γ, A) 階段：鞍點系統 [M_γ, −C; Cᵀ, (1/δt) M_A + ω D]，γ 邊界為 H，A·n = 0

兩個左端矩陣與時間無關，只在建構或 ω 改變時分解。
"""

from dataclasses import dataclass, replace
from typing import Dict, Optional

import numpy as np
import scipy.sparse as sp
from loguru import logger

from src.data_models import ElementFamily, TdglParams, ValueKind
from src.fem.assembly import (
    QuadratureContext, assemble_divdiv, assemble_mass, assemble_mixed_curl,
    assemble_stiffness, assemble_weighted_vector,
)
from src.fem.fields import Field
from src.fem.spaces import FunctionSpace, build_space
from src.linalg.sparse_solver import DirichletLifting, factorize
from src.mesh.mesh import Mesh
from src.utils import timeit


class SimulationDivergedError(RuntimeError):
    """場出現 NaN 或超出界限"""

    def __init__(self, message: str, step: int):
        super().__init__(f"第 {step} 步: {message}")
        self.step = step


def _element_orders(dim: int, order: int):
    """(ψ, A, γ) 的空間族群與階數"""
    if dim == 2:
        return ((ElementFamily.LAGRANGE, order),
                (ElementFamily.RAVIART_THOMAS, order),
                (ElementFamily.LAGRANGE, order + 1))
    return ((ElementFamily.LAGRANGE, order + 1),
            (ElementFamily.RAVIART_THOMAS, order),
            (ElementFamily.NEDELEC, order))


class TdglSystem:
    """
    離散空間、常數矩陣與其分解

    Args:
        mesh: 網格
        params: TDGL 參數
        memory_budget_mb: LU 記憶體預算，超過時改用迭代求解
    """

    def __init__(self, mesh: Mesh, params: TdglParams, memory_budget_mb: Optional[float] = None):
        self.mesh = mesh
        self.dim = mesh.dim
        self.memory_budget_mb = memory_budget_mb
        (fp, rp), (fa, ra), (fg, rg) = _element_orders(mesh.dim, params.order)
        self.psi_space = build_space(mesh, fp, rp, ValueKind.COMPLEX_SCALAR)
        self.A_space = build_space(mesh, fa, ra)
        self.gamma_space = build_space(mesh, fg, rg)

        r = max(params.order, 1)
        self.bilinear_degree = 2 * r + 2
        self.nonlinear_degree = max(3 * r + 1, self.bilinear_degree)
        self.ctx = QuadratureContext(mesh, self.nonlinear_degree)
        self._assemble_matrices()
        self._psi_signature = None
        self._block_signature = None
        self.factorize(params)
        self._gamma_boundary_cache: Dict[float, np.ndarray] = {}

    @timeit
    def _assemble_matrices(self) -> None:
        ctx = QuadratureContext(self.mesh, self.bilinear_degree)
        self.M_psi = assemble_mass(self.psi_space, ctx=ctx)
        self.K_psi = assemble_stiffness(self.psi_space, ctx=ctx)
        self.M_A = assemble_mass(self.A_space, ctx=ctx)
        self.D_A = assemble_divdiv(self.A_space, ctx=ctx)
        self.M_gamma = assemble_mass(self.gamma_space, ctx=ctx)
        self.C = assemble_mixed_curl(self.gamma_space, self.A_space, ctx=ctx)
        n_g = self.gamma_space.ndofs
        self.constrained = np.concatenate([
            self.gamma_space.boundary_dofs,
            n_g + self.A_space.boundary_dofs,
        ])
        logger.info(
            f"TDGL 系統: ψ {self.psi_space.ndofs} 自由度, A {self.A_space.ndofs}, γ {n_g}, "
            f"受限 {len(self.constrained)}"
        )

    def block_matrix(self, dt: float, omega: float) -> sp.csr_matrix:
        """[M_γ, −C; Cᵀ, (1/δt) M_A + ω D]"""
        A_block = self.M_A / dt + omega * self.D_A
        return sp.csr_matrix(sp.bmat([[self.M_gamma, -self.C], [self.C.T, A_block]]))

    @timeit
    def factorize(self, params: TdglParams) -> None:
        """依 (δt, κ, ω) 分解兩個左端矩陣；參數未變的部分沿用既有分解"""
        psi_sig = (params.dt, params.kappa)
        if psi_sig != self._psi_signature:
            L_psi = self.M_psi / params.dt + self.K_psi / params.kappa ** 2
            self.psi_factor = factorize(L_psi, self.memory_budget_mb, symmetric=True)
            self._psi_signature = psi_sig
        block_sig = (params.dt, params.omega)
        if block_sig != self._block_signature:
            block = self.block_matrix(params.dt, params.omega)
            self.block_lifting = DirichletLifting(block, self.constrained)
            self.block_factor = factorize(self.block_lifting.matrix, self.memory_budget_mb)
            self._block_signature = block_sig
            logger.info(f"(γ, A) 系統已分解: ω={params.omega:g}, δt={params.dt:g}")

    def gamma_boundary_values(self, params: TdglParams, t: float) -> np.ndarray:
        """γ 邊界自由度上的 H（2D 為節點值，3D 為 Nedelec 切向矩）"""
        time_dependent = params.forcing is not None
        key = t if time_dependent else 0.0
        if key not in self._gamma_boundary_cache:
            coeffs = self.gamma_space.interpolate_dofs(lambda x: params.applied_field(x, t))
            if time_dependent:
                self._gamma_boundary_cache.clear()
            self._gamma_boundary_cache[key] = coeffs[self.gamma_space.boundary_dofs]
        return self._gamma_boundary_cache[key]


@dataclass(frozen=True)
class TdglState:
    """(ψ, A, γ) 與時間、步數；system 持有快取的分解"""
    psi: Field
    A: Field
    gamma: Field
    t: float
    n: int
    system: TdglSystem

    @property
    def mesh(self) -> Mesh:
        return self.system.mesh


def init_state(mesh: Mesh, params: TdglParams, memory_budget_mb: Optional[float] = None,
               system: Optional[TdglSystem] = None) -> TdglState:
    """
    初始狀態 ψ ≡ 1、A ≡ 0、γ ≡ 0，並組裝、分解兩個左端矩陣
    """
    if system is None:
        system = TdglSystem(mesh, params, memory_budget_mb)
    else:
        system.factorize(params)
    psi = Field(system.psi_space, np.ones(system.psi_space.ndofs, dtype=complex))
    A = Field.zeros(system.A_space)
    gamma = Field.zeros(system.gamma_space)
    return TdglState(psi=psi, A=A, gamma=gamma, t=0.0, n=0, system=system)


def step_psi(state: TdglState, params: TdglParams) -> Field:
    """
    ψ 階段

    右端項：(1/δt)(ψⁿ, w) + i(κω + 1/κ)(div Aⁿ ψⁿ, w) + (2i/κ)(ψⁿ Aⁿ, ∇w)
    + ((1 − |Aⁿ|² − |ψⁿ|²) ψⁿ, w) + (g, w)
    """
    system = state.system
    ctx = system.ctx
    kappa, omega = params.kappa, params.omega
    t_new = state.t + params.dt

    psi = ctx.evaluate(state.psi)
    A = ctx.evaluate(state.A)
    div_A = ctx.evaluate(state.A, 'div')
    A_sq = np.sum(A * A, axis=-1)

    def value_terms(c):
        out = 1j * (kappa * omega + 1.0 / kappa) * div_A * psi + (1.0 - A_sq - np.abs(psi) ** 2) * psi
        if params.forcing is not None:
            out = out + params.forcing.source_psi(c.x, t_new)
        return out

    rhs = system.M_psi @ state.psi.coeffs / params.dt
    rhs = rhs + assemble_weighted_vector(system.psi_space, value_terms, ctx=ctx)
    rhs = rhs + assemble_weighted_vector(
        system.psi_space, lambda c: (2j / kappa) * psi[..., None] * A, against='grad', ctx=ctx)
    return Field(system.psi_space, system.psi_factor.solve(rhs))


def supercurrent_density(psi: np.ndarray, grad_psi: np.ndarray, kappa: float) -> np.ndarray:
    """(1/(2iκ))(ψ*∇ψ − ψ∇ψ*) = Im(ψ*∇ψ)/κ"""
    return np.imag(np.conj(psi)[..., None] * grad_psi) / kappa


def step_gamma_A(state: TdglState, params: TdglParams, psi_old: Optional[Field] = None):
    """
    (γ, A) 階段

    右端項：(1/δt)(Aⁿ, v) + (Im(ψ*∇ψ)/κ, v) − (|ψ|² Aⁿ, v) + (curl H, v) + (f, v)，
    ψ 為更新前的 ψⁿ。

    Returns:
        (γ^{n+1}, A^{n+1})
    """
    system = state.system
    ctx = system.ctx
    psi_old = psi_old if psi_old is not None else state.psi
    t_new = state.t + params.dt

    psi = ctx.evaluate(psi_old)
    grad_psi = ctx.evaluate(psi_old, 'grad')
    A = ctx.evaluate(state.A)

    def vector_terms(c):
        out = supercurrent_density(psi, grad_psi, params.kappa) - (np.abs(psi) ** 2)[..., None] * A
        curl_H = params.applied_field_curl(c.x, t_new)
        if curl_H is not None:
            out = out + curl_H
        if params.forcing is not None:
            out = out + params.forcing.source_A(c.x, t_new)
        return out

    n_g = system.gamma_space.ndofs
    rhs_A = system.M_A @ state.A.coeffs / params.dt
    rhs_A = rhs_A + assemble_weighted_vector(system.A_space, vector_terms, ctx=ctx)
    rhs = np.concatenate([np.zeros(n_g), rhs_A])

    values = np.concatenate([
        system.gamma_boundary_values(params, t_new),
        np.zeros(len(system.A_space.boundary_dofs)),
    ])
    x = system.block_factor.solve(system.block_lifting.apply(rhs, values))
    return Field(system.gamma_space, x[:n_g]), Field(system.A_space, x[n_g:])


def step(state: TdglState, params: TdglParams) -> TdglState:
    """前進一步（兩階段皆使用第 n 步的場）"""
    psi_new = step_psi(state, params)
    gamma_new, A_new = step_gamma_A(state, params, state.psi)
    n_new = state.n + 1
    for name, field in (('ψ', psi_new), ('A', A_new), ('γ', gamma_new)):
        if not np.all(np.isfinite(field.coeffs)):
            raise SimulationDivergedError(f"{name} 出現非有限值 (t={state.t + params.dt:g})", n_new)
    logger.debug(f"step {n_new}: t={state.t + params.dt:.6g}, max|ψ|={np.abs(psi_new.coeffs).max():.4f}")
    return replace(state, psi=psi_new, A=A_new, gamma=gamma_new, t=state.t + params.dt, n=n_new)


def with_fields(state: TdglState, psi: np.ndarray, A: np.ndarray, gamma: np.ndarray,
                t: float, n: int) -> TdglState:
    """以給定的自由度向量建立狀態（檢查點與人造解起始資料）"""
    system = state.system
    return replace(
        state,
        psi=Field(system.psi_space, np.asarray(psi, dtype=complex)),
        A=Field(system.A_space, np.asarray(A, dtype=float)),
        gamma=Field(system.gamma_space, np.asarray(gamma, dtype=float)),
        t=float(t), n=int(n),
    )
