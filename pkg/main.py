"""
ω 規範 TDGL 混合有限元素求解器主程式

子指令：
- mms：人造解源項檢查與收斂階研究（Richardson / 圖解法）
- orders：對一組 ω 做收斂階掃描，輸出單一 CSV
- bench-disk / bench-cube / bench-sphere：渦旋基準測試
- resume：自檢查點熱啟動（可搭配 ω 排程）
"""

import logging
import math
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence, Tuple

from loguru import logger as loguru_logger

# 添加專案路徑
sys.path.append(os.path.dirname(os.path.abspath(__file__)))

from src.config import ConfigError, parse_config
from src.data_models import NotchedDiskGeometry, RunConfig, Subcommand, TdglParams
from src.mesh import Mesh, generate_notched_disk_mesh, generate_unit_cube_mesh, read_msh
from src.output import write_observables_csv, write_report_csv, write_state_vtk
from src.tdgl import (
    EnergyObserver, NormalZoneObserver, ObservableLog, SnapshotObserver, VortexObserver,
    load_checkpoint, read_mesh_source, run, save_checkpoint,
)
from src.utils import timeit
from src.verification import (
    AcceptanceContext, AcceptanceRulesEngine, ConvergenceReport, EnergyDecayRule, EnergyWindowRule,
    ManufacturedCase, MethodAgreementRule, VortexCountRule, check_forcing, graphical_study,
    lorenz_rules, richardson_study, temporal_gauge_rules,
)

LOG_FORMAT = '%(asctime)s | %(levelname)s | %(name)s:%(funcName)s:%(lineno)d - %(message)s'
logger = logging.getLogger(__name__)


def configure_logging(level: str) -> None:
    """標準 logging 與 loguru 使用相同層級"""
    logging.basicConfig(level=getattr(logging, level, logging.INFO), format=LOG_FORMAT, force=True)
    loguru_logger.remove()
    loguru_logger.add(sys.stderr, level=level)


def _case_name(dim: int) -> str:
    return 'tdgl-2d' if dim == 2 else 'tdgl-3d'


def _study_worker(job) -> List[ConvergenceReport]:
    """單一 ω 的收斂研究（在子程序中執行，只傳遞可序列化的參數）"""
    name, kappa, omega, config = job
    case = ManufacturedCase.create(name, kappa=kappa, omega=omega)
    reports = []
    if config.method in ('richardson', 'both'):
        reports.append(richardson_study(case, omega, config.M, config.dt, config.n_steps,
                                        config.order, memory_budget_mb=config.memory_budget_mb))
    if config.method in ('graphical', 'both'):
        reports.append(graphical_study(case, omega, config.M_list, config.order,
                                       memory_budget_mb=config.memory_budget_mb))
    return reports


class TdglSuite:
    """TDGL 求解與驗證流程"""

    def __init__(self, config: RunConfig):
        self.config = config
        self.output_dir = Path(config.output_dir)
        self.engine = AcceptanceRulesEngine()
        self.context = AcceptanceContext()
        self.geometry: Optional[NotchedDiskGeometry] = None
        self.mesh_source: Dict[str, Any] = {}

    # ------------------------------------------------------------------
    # 共用
    # ------------------------------------------------------------------

    def _params(self, omega: Optional[float] = None) -> TdglParams:
        c = self.config
        return TdglParams(kappa=c.kappa, omega=c.omega_at(0) if omega is None else omega,
                          H=c.applied_field(), dt=c.dt, order=c.order)

    def _mesh_source(self) -> Dict[str, Any]:
        """目前設定所描述的網格來源（寫入檢查點）"""
        c = self.config
        if c.mesh_path:
            return {'kind': 'msh', 'path': str(Path(c.mesh_path).resolve())}
        if c.subcommand is Subcommand.BENCH_CUBE or (c.subcommand is Subcommand.RESUME and c.dim == 3):
            return {'kind': 'cube', 'M': c.M}
        return {'kind': 'notched_disk', 'radius': c.radius, 'kappa': c.kappa, 'nodes_per_xi': c.nodes_per_xi,
                'notch_depth': c.notch_depth, 'notch_half_angle': c.notch_half_angle}

    def _mesh_from_source(self, source: Dict[str, Any]) -> Mesh:
        kind = source.get('kind')
        if kind == 'msh':
            return read_msh(source['path'])
        if kind == 'cube':
            return generate_unit_cube_mesh(int(source['M']))
        if kind == 'notched_disk':
            self.geometry = NotchedDiskGeometry.from_nodes_per_xi(
                source['radius'], source['kappa'], source['nodes_per_xi'],
                source['notch_depth'], source['notch_half_angle'])
            return generate_notched_disk_mesh(self.geometry)
        raise ConfigError(f"未知的網格來源: {source!r}")

    def build_mesh(self) -> Mesh:
        """
        依子指令建立或匯入網格

        resume 未指定 --mesh 時依檢查點記錄的來源重建；舊檢查點沒有來源時
        依 --dim 選擇立方體或缺口圓盤。
        """
        c = self.config
        if c.subcommand is Subcommand.BENCH_SPHERE and not c.mesh_path:
            raise ConfigError("bench-sphere 需要 --mesh（球體網格只能匯入）")
        source = self._mesh_source()
        if c.subcommand is Subcommand.RESUME and not c.mesh_path:
            recorded = read_mesh_source(c.checkpoint)
            if recorded:
                source = recorded
            else:
                logger.warning(f"檢查點沒有網格來源，依設定重建: {source['kind']}")
        self.mesh_source = source
        return self._mesh_from_source(source)

    def _observers(self, mesh: Mesh, params: TdglParams):
        c = self.config
        observers = [EnergyObserver()]
        if mesh.dim == 2:
            observers.append(VortexObserver(c.vortex_threshold))
            if self.geometry is not None:
                observers.append(NormalZoneObserver(self.geometry.apex, 2.0 / params.kappa,
                                                    c.normal_zone_threshold))
        if c.snapshot_every > 0:
            snapshots = self.output_dir / 'snapshots'
            observers.append(SnapshotObserver(
                lambda state, params: write_state_vtk(state, params, snapshots / f"step_{state.n:06d}.vtk"),
                every=c.snapshot_every))
        return observers

    def _schedule(self):
        return self.config.omega_schedule or None

    def _evaluate(self) -> bool:
        findings = self.engine.run_analysis(self.context)
        summary = self.engine.get_summary(findings)
        logger.info(f"驗收摘要: {summary}")
        return not self.engine.is_failure(findings, strict=self.config.strict)

    def _finish_run(self, log: ObservableLog, params: TdglParams, tag: str) -> None:
        write_observables_csv(log, self.output_dir / f"{tag}_observables.csv")
        state = log.final_state
        write_state_vtk(state, params, self.output_dir / f"{tag}_final.vtk")
        checkpoint = self.config.checkpoint if self.config.subcommand is not Subcommand.RESUME else None
        save_checkpoint(state, params, checkpoint or self.output_dir / f"{tag}_final.npz",
                        mesh_source=self.mesh_source)
        self.context.observables = log.to_frame()

    # ------------------------------------------------------------------
    # 子指令
    # ------------------------------------------------------------------

    @timeit
    def run_mms(self) -> bool:
        """源項檢查後執行收斂研究"""
        try:
            c = self.config
            name = _case_name(c.dim)
            for omega in sorted({0.0, 1e-3, 1.0, c.omega}):
                case = ManufacturedCase.create(name, kappa=c.kappa, omega=omega)
                self.context.forcing_residuals[f"{name}@{omega:g}"] = check_forcing(case)

            reports = _study_worker((name, c.kappa, c.omega, c))
            self.context.reports.extend(reports)
            for report in reports:
                write_report_csv(report, self.output_dir / f"mms_{report.method}_omega{c.omega:g}.csv")
            for rule in lorenz_rules(c.order, c.dim) + temporal_gauge_rules(c.order, c.dim):
                self.engine.add_rule(rule)
            return self._evaluate()
        except Exception as e:
            logger.error(f"MMS 研究失敗: {e}")
            return False

    @timeit
    def run_orders(self) -> bool:
        """ω 掃描；各 ω 互相獨立，可平行執行"""
        try:
            c = self.config
            name = _case_name(c.dim)
            for omega in c.omegas:
                case = ManufacturedCase.create(name, kappa=c.kappa, omega=omega)
                self.context.forcing_residuals[f"{name}@{omega:g}"] = check_forcing(case, n_points=20)

            jobs = [(name, c.kappa, omega, c) for omega in c.omegas]
            if c.workers > 1:
                with ProcessPoolExecutor(max_workers=c.workers) as pool:
                    results = list(pool.map(_study_worker, jobs))
            else:
                results = [_study_worker(job) for job in jobs]
            reports = [r for batch in results for r in batch]
            self.context.reports.extend(reports)

            for method in ('richardson', 'graphical'):
                selected = [r for r in reports if r.method == method]
                if selected:
                    write_report_csv(selected, self.output_dir / f"orders_{method}_r{c.order}_{c.dim}d.csv")
            for rule in lorenz_rules(c.order, c.dim) + temporal_gauge_rules(c.order, c.dim):
                self.engine.add_rule(rule)
            if c.method == 'both':
                self.engine.add_rule(MethodAgreementRule('A', 0.35, order=c.order))
            return self._evaluate()
        except Exception as e:
            logger.error(f"ω 掃描失敗: {e}")
            return False

    @timeit
    def run_benchmark(self) -> bool:
        """bench-disk / bench-cube / bench-sphere"""
        try:
            c = self.config
            mesh = self.build_mesh()
            logger.info(f"網格: {mesh.summary()}")
            params = self._params()
            log = run(mesh, params, c.n_steps, self._observers(mesh, params),
                      omega_schedule=self._schedule(), observe_every=c.observe_every,
                      memory_budget_mb=c.memory_budget_mb)
            final_params = params.with_omega(c.omega_at(log.final_state.n))
            tag = c.subcommand.value.replace('-', '_')
            self._finish_run(log, final_params, tag)

            if c.subcommand is Subcommand.BENCH_DISK:
                self.engine.add_rule(EnergyDecayRule(1e-8))
                self.engine.add_rule(VortexCountRule({20, 21, 22}, stable_steps=200))
                if c.n_steps >= 5000:
                    self.engine.add_rule(EnergyWindowRule(16.4711, 0.5))
            return self._evaluate()
        except Exception as e:
            logger.error(f"基準測試失敗: {e}")
            return False

    def _resume_params(self, params: TdglParams, mesh: Mesh, step: int) -> TdglParams:
        """
        resume 以檢查點參數為準

        明確指定且與檢查點不同的 κ、δt、r、H 或維度視為設定錯誤；
        ω 可由 --omega 或 --omega-schedule 改變。
        """
        c = self.config
        explicit = set(c.explicit_keys)
        conflicts = []
        if 'dim' in explicit and c.dim != mesh.dim:
            conflicts.append(f"--dim {c.dim}（檢查點 {mesh.dim}）")
        for key in ('kappa', 'dt', 'order'):
            given, stored = getattr(c, key), getattr(params, key)
            if key in explicit and not math.isclose(given, stored, rel_tol=1e-12):
                conflicts.append(f"--{key} {given:g}（檢查點 {stored:g}）")
        if 'H' in explicit:
            given, stored = _as_tuple(c.applied_field()), _as_tuple(params.H)
            same = len(given) == len(stored) and all(
                math.isclose(a, b, rel_tol=1e-12, abs_tol=1e-12) for a, b in zip(given, stored))
            if not same:
                conflicts.append(f"--H {_format_field(given)}（檢查點 {_format_field(stored)}）")
        if conflicts:
            raise ConfigError("resume 的參數來自檢查點，下列旗標與檢查點不符: " + "、".join(conflicts))

        if c.omega_schedule:
            return params.with_omega(c.omega_at(step))
        if 'omega' in explicit:
            return params.with_omega(c.omega)
        return params

    @timeit
    def run_resume(self) -> bool:
        """自檢查點繼續推進（延續法：逐步提高 ω）"""
        try:
            c = self.config
            if not c.checkpoint:
                raise ConfigError("resume 需要 --checkpoint")
            mesh = self.build_mesh()
            state, stored = load_checkpoint(c.checkpoint, mesh, c.memory_budget_mb)
            params = self._resume_params(stored, mesh, state.n)
            if params.omega != stored.omega:
                logger.info(f"ω 由檢查點的 {stored.omega:g} 改為 {params.omega:g}")
            log = run(mesh, params, c.n_steps, self._observers(mesh, params), state=state,
                      omega_schedule=self._schedule(), observe_every=c.observe_every,
                      memory_budget_mb=c.memory_budget_mb)
            self._finish_run(log, self._resume_params(stored, mesh, log.final_state.n), 'resume')
            return self._evaluate()
        except Exception as e:
            logger.error(f"恢復執行失敗: {e}")
            return False


def _as_tuple(H) -> Tuple[float, ...]:
    return tuple(float(v) for v in H) if isinstance(H, (tuple, list)) else (float(H),)


def _format_field(values: Tuple[float, ...]) -> str:
    return ' '.join(f'{v:g}' for v in values)


def run_suite(config: RunConfig) -> int:
    """執行子指令並回傳結束碼"""
    suite = TdglSuite(config)
    dispatch = {
        Subcommand.MMS: suite.run_mms,
        Subcommand.ORDERS: suite.run_orders,
        Subcommand.BENCH_DISK: suite.run_benchmark,
        Subcommand.BENCH_CUBE: suite.run_benchmark,
        Subcommand.BENCH_SPHERE: suite.run_benchmark,
        Subcommand.RESUME: suite.run_resume,
    }
    success = dispatch[config.subcommand]()
    if success:
        logger.info("執行成功")
        return 0
    logger.error("執行失敗")
    return 1


def main(argv: Optional[Sequence[str]] = None) -> None:
    """主程式入口"""
    try:
        config = parse_config(sys.argv[1:] if argv is None else argv)
    except ConfigError as e:
        logging.basicConfig(format=LOG_FORMAT)
        logger.error(f"設定錯誤: {e}")
        sys.exit(2)
    configure_logging(config.log_level)

    try:
        code = run_suite(config)
    except KeyboardInterrupt:
        logger.info("使用者中斷執行")
        code = 130
    if code:
        sys.exit(code)


if __name__ == '__main__':
    main()
