"""
命令列與設定檔解析

優先順序（低 → 高）：RunConfig 預設值 < 子指令預設值 < 環境變數
（TDGL_OUTPUT_DIR、TDGL_LOG_LEVEL）< 設定檔（key = value）< 命令列旗標。
"""

import argparse
import logging
import math
import os
from dataclasses import fields
from pathlib import Path
from typing import Any, Callable, Dict, Optional, Sequence, Tuple

from dotenv import dotenv_values

from src.data_models import RunConfig, Subcommand

logger = logging.getLogger(__name__)

ENV_KEYS = {'TDGL_OUTPUT_DIR': 'output_dir', 'TDGL_LOG_LEVEL': 'log_level'}

SUBCOMMAND_DEFAULTS: Dict[Subcommand, Dict[str, Any]] = {
    Subcommand.MMS: {},
    Subcommand.ORDERS: {},
    Subcommand.BENCH_DISK: {'kappa': 4.0, 'H': (0.9,), 'dt': 1.0, 'n_steps': 5000, 'order': 2,
                            'observe_every': 10},
    Subcommand.BENCH_CUBE: {'dim': 3, 'order': 0, 'kappa': 10.0, 'H': (0.0, 0.0, 5.0), 'dt': 0.1,
                            'n_steps': 1000, 'M': 10, 'observe_every': 10},
    Subcommand.BENCH_SPHERE: {'dim': 3, 'order': 0, 'kappa': 10.0, 'H': (0.0, 0.0, 5.0), 'dt': 0.1,
                              'n_steps': 500, 'observe_every': 10},
    Subcommand.RESUME: {'dt': 1.0, 'order': 2, 'kappa': 4.0, 'H': (0.9,), 'observe_every': 10},
}

# 設定檔鍵與旗標的別名
ALIASES = {'steps': 'n_steps', 'r': 'radius', 'mesh': 'mesh_path', 'm': 'M', 'm_list': 'M_list',
           'h': 'H', 'config': None}


class ConfigError(ValueError):
    """設定錯誤（訊息中包含出錯的旗標或鍵）"""


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise ConfigError(message)


# ============================================================================
# 轉換器
# ============================================================================

def _floats(text) -> Tuple[float, ...]:
    if isinstance(text, (list, tuple)):
        return tuple(float(v) for v in text)
    return tuple(float(v) for v in str(text).replace(',', ' ').split())


def _ints(text) -> Tuple[int, ...]:
    return tuple(int(v) for v in _floats(text))


def _bool(text) -> bool:
    if isinstance(text, bool):
        return text
    value = str(text).strip().lower()
    if value in ('1', 'true', 'yes', 'on'):
        return True
    if value in ('0', 'false', 'no', 'off'):
        return False
    raise ValueError(f"無法解析布林值: {text}")


def parse_omega_schedule(text: str) -> Tuple[Tuple[int, float], ...]:
    """'step:omega,step:omega'，步數嚴格遞增且由 0 開始"""
    pairs = []
    for item in str(text).split(','):
        item = item.strip()
        if not item:
            continue
        if ':' not in item:
            raise ValueError(f"ω 排程項目必須為 step:omega: '{item}'")
        step, omega = item.split(':', 1)
        pairs.append((int(step), float(omega)))
    if not pairs:
        raise ValueError("ω 排程是空的")
    steps = [s for s, _ in pairs]
    if steps[0] != 0:
        raise ValueError("ω 排程必須從第 0 步開始")
    if any(b <= a for a, b in zip(steps, steps[1:])):
        raise ValueError(f"ω 排程的步數必須嚴格遞增: {steps}")
    if any(w < 0 for _, w in pairs):
        raise ValueError("ω 必須非負")
    return tuple(pairs)


CONVERTERS: Dict[str, Callable[[Any], Any]] = {
    'dim': int, 'order': int, 'omega': float, 'omega_schedule': parse_omega_schedule,
    'omegas': _floats, 'kappa': float, 'H': _floats, 'dt': float, 'n_steps': int, 'M': int,
    'M_list': _ints, 'method': str, 'radius': float, 'nodes_per_xi': float,
    'notch_depth': float, 'notch_half_angle': float, 'mesh_path': str, 'checkpoint': str,
    'output_dir': str, 'snapshot_every': int, 'observe_every': int, 'vortex_threshold': float,
    'normal_zone_threshold': float, 'memory_budget_mb': float, 'workers': int, 'strict': _bool,
    'log_level': lambda v: str(v).upper(),
}


def _flag(key: str) -> str:
    return '--' + key.replace('_', '-')


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog='main.py', description='ω 規範 TDGL 混合有限元素求解器與收斂驗證',
                     argument_default=argparse.SUPPRESS)
    parser.add_argument('subcommand', choices=[s.value for s in Subcommand], help='子指令')
    parser.add_argument('--config', help='設定檔路徑（key = value）')
    parser.add_argument('--dim', type=int, choices=[2, 3], help='空間維度')
    parser.add_argument('--order', type=int, help='有限元素階數 r')
    parser.add_argument('--omega', type=float, help='規範參數 ω')
    parser.add_argument('--omega-schedule', dest='omega_schedule', type=parse_omega_schedule,
                        help="分段常數 ω 排程，如 '0:1e-4,5000:1'")
    parser.add_argument('--omegas', type=_floats, help='orders 子指令的 ω 列表（逗號分隔）')
    parser.add_argument('--kappa', type=float, help='Ginzburg-Landau 參數 κ')
    parser.add_argument('--H', nargs='+', type=float, help='外加場（2D 純量，3D 三分量）')
    parser.add_argument('--dt', type=float, help='時間步長 δt')
    parser.add_argument('--steps', dest='n_steps', type=int, help='步數')
    parser.add_argument('--M', type=int, help='結構網格每邊的分割數')
    parser.add_argument('--M-list', dest='M_list', type=_ints, help='圖解法的 M 列表（逗號分隔）')
    parser.add_argument('--method', choices=['richardson', 'graphical', 'both'], help='收斂階估計方法')
    parser.add_argument('--R', dest='radius', type=float, help='圓盤半徑')
    parser.add_argument('--nodes-per-xi', dest='nodes_per_xi', type=float, help='每個相干長度的節點數')
    parser.add_argument('--notch-depth', dest='notch_depth', type=float, help='缺口深度 d')
    parser.add_argument('--notch-half-angle', dest='notch_half_angle', type=float, help='缺口半角（弧度）')
    parser.add_argument('--mesh', dest='mesh_path', help='Gmsh MSH 2.2 檔案路徑')
    parser.add_argument('--checkpoint', help='檢查點路徑（resume 讀取，其他子指令寫出）')
    parser.add_argument('--output-dir', dest='output_dir', help='輸出目錄')
    parser.add_argument('--snapshot-every', dest='snapshot_every', type=int, help='VTK 快照週期（0 為關閉）')
    parser.add_argument('--observe-every', dest='observe_every', type=int, help='觀測週期')
    parser.add_argument('--vortex-threshold', dest='vortex_threshold', type=float, help='渦旋門檻 τ')
    parser.add_argument('--normal-zone-threshold', dest='normal_zone_threshold', type=float,
                        help='正常區 |ψ| 門檻')
    parser.add_argument('--memory-budget-mb', dest='memory_budget_mb', type=float, help='LU 記憶體預算')
    parser.add_argument('--workers', type=int, help='平行執行的程序數')
    parser.add_argument('--strict', action='store_true', help='HIGH 等級的驗收發現也視為失敗')
    parser.add_argument('--log-level', dest='log_level', type=lambda v: v.upper(),
                        choices=['DEBUG', 'INFO', 'WARNING', 'ERROR'], help='日誌層級')
    return parser


# ============================================================================
# 解析
# ============================================================================

def _normalize_key(key: str) -> Optional[str]:
    key = key.strip()
    known = {f.name for f in fields(RunConfig)} - {'subcommand', 'explicit_keys'}
    if key in known:
        return key
    lowered = key.lower().replace('-', '_')
    if lowered in ALIASES:
        return ALIASES[lowered]
    for name in known:
        if name.lower() == lowered:
            return name
    raise ConfigError(f"未知的設定鍵: '{key}'")


def load_config_file(path: str) -> Dict[str, Any]:
    """讀取 key = value 設定檔"""
    if not Path(path).exists():
        raise ConfigError(f"設定檔不存在: {path}")
    values: Dict[str, Any] = {}
    for raw_key, raw_value in dotenv_values(path).items():
        key = _normalize_key(raw_key)
        if key is None:
            continue
        if raw_value is None:
            raise ConfigError(f"設定鍵 '{raw_key}' 沒有值")
        try:
            values[key] = CONVERTERS[key](raw_value)
        except ValueError as e:
            raise ConfigError(f"設定鍵 '{raw_key}' 的值無效: {e}") from e
    logger.info(f"載入設定檔: {path} ({len(values)} 個鍵)")
    return values


def _validate(config: RunConfig) -> None:
    checks = [
        ('kappa', config.kappa > 0, "必須為正"),
        ('dt', config.dt > 0, "必須為正"),
        ('omega', config.omega >= 0, "必須非負"),
        ('omegas', all(w >= 0 for w in config.omegas), "必須非負"),
        ('n_steps', config.n_steps >= 0, "不可為負"),
        ('M', config.M >= 1, "必須為正"),
        ('M_list', len(config.M_list) >= 2 and all(b > a for a, b in zip(config.M_list, config.M_list[1:])),
         "必須嚴格遞增且至少兩層"),
        ('radius', config.radius > 0, "必須為正"),
        ('nodes_per_xi', config.nodes_per_xi > 0, "必須為正"),
        ('notch_half_angle', 0 < config.notch_half_angle < math.pi / 2, "必須介於 0 與 π/2"),
        ('vortex_threshold', 0 < config.vortex_threshold < 1, "必須介於 0 與 1"),
        ('normal_zone_threshold', 0 < config.normal_zone_threshold < 1, "必須介於 0 與 1"),
        ('observe_every', config.observe_every >= 1, "必須為正"),
        ('snapshot_every', config.snapshot_every >= 0, "不可為負"),
        ('workers', config.workers >= 1, "必須為正"),
        ('H', len(config.H) in ((1,) if config.dim == 2 else (1, 3)), "2D 需要 1 個分量，3D 需要 1 或 3 個"),
    ]
    for key, ok, message in checks:
        if not ok:
            raise ConfigError(f"{_flag(key)} {message}: {getattr(config, key)}")


def parse_config(argv: Sequence[str], config_path: Optional[str] = None) -> RunConfig:
    """
    解析命令列（與可選的設定檔）

    Raises:
        ConfigError: 未知的旗標或鍵、數值無效、--omega 與 --omega-schedule 衝突
    """
    args = vars(build_parser().parse_args(list(argv)))
    subcommand = Subcommand(args.pop('subcommand'))
    config_path = args.pop('config', None) or config_path
    if 'H' in args:
        args['H'] = tuple(args['H'])

    values: Dict[str, Any] = dict(SUBCOMMAND_DEFAULTS[subcommand])
    for env_key, key in ENV_KEYS.items():
        if os.getenv(env_key):
            values[key] = CONVERTERS[key](os.environ[env_key])

    explicit: Dict[str, Any] = {}
    if config_path:
        explicit.update(load_config_file(config_path))
    explicit.update(args)
    if 'omega' in explicit and 'omega_schedule' in explicit:
        raise ConfigError("--omega 與 --omega-schedule 不能同時指定")
    values.update(explicit)

    try:
        config = RunConfig(subcommand=subcommand, explicit_keys=tuple(sorted(explicit)), **values)
    except TypeError as e:
        raise ConfigError(str(e)) from e
    _validate(config)
    return config
