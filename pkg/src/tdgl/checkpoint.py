"""
狀態檢查點

.npz 容器內容：格式版本、網格 SHA-256、網格來源 JSON、參數 JSON、(ψ, A, γ) 自由度、
t 與步數。網格來源記錄產生器種類與其參數，resume 據此重建同一網格。
"""

import json
from pathlib import Path
from typing import Any, Dict, Optional, Tuple, Union

import numpy as np
from loguru import logger

from src.data_models import TdglParams
from src.mesh.mesh import Mesh
from .solver import TdglState, TdglSystem, init_state, with_fields

CHECKPOINT_VERSION = 1


class CheckpointError(ValueError):
    """檢查點格式錯誤或與網格不符"""


def save_checkpoint(state: TdglState, params: TdglParams, path: Union[str, Path],
                    mesh_source: Optional[Dict[str, Any]] = None) -> Path:
    """
    寫入檢查點；回傳實際路徑（np.savez 會補上 .npz）

    Args:
        mesh_source: 網格來源，如 {'kind': 'cube', 'M': 10}；None 表示未知
    """
    path = Path(path)
    if path.suffix != '.npz':
        path = path.with_suffix('.npz')
    path.parent.mkdir(parents=True, exist_ok=True)
    np.savez(
        path,
        format_version=np.int64(CHECKPOINT_VERSION),
        mesh_hash=np.array(state.mesh.mesh_hash()),
        mesh_source=np.array(json.dumps(mesh_source or {}, sort_keys=True)),
        params=np.array(json.dumps(params.to_dict(), sort_keys=True)),
        psi=state.psi.coeffs,
        A=state.A.coeffs,
        gamma=state.gamma.coeffs,
        t=np.float64(state.t),
        n=np.int64(state.n),
    )
    logger.info(f"檢查點已寫入: {path} (step {state.n}, t={state.t:g})")
    return path


def load_checkpoint(path: Union[str, Path], mesh: Mesh, memory_budget_mb: Optional[float] = None,
                    system: Optional[TdglSystem] = None) -> Tuple[TdglState, TdglParams]:
    """
    讀取檢查點並在給定網格上重建狀態

    Raises:
        CheckpointError: 版本不符、網格雜湊不符或內容不完整
    """
    path = Path(path)
    if not path.exists():
        raise CheckpointError(f"檢查點不存在: {path}")
    try:
        with np.load(path, allow_pickle=False) as data:
            version = int(data['format_version'])
            mesh_hash = str(data['mesh_hash'])
            params_dict = json.loads(str(data['params']))
            psi, A, gamma = data['psi'], data['A'], data['gamma']
            t, n = float(data['t']), int(data['n'])
    except (KeyError, ValueError, OSError) as e:
        raise CheckpointError(f"無法讀取檢查點 {path}: {e}") from e

    if version != CHECKPOINT_VERSION:
        raise CheckpointError(f"不支援的檢查點版本 {version}（預期 {CHECKPOINT_VERSION}）")
    if mesh_hash != mesh.mesh_hash():
        raise CheckpointError("檢查點的網格雜湊與目前網格不符")

    H = params_dict.get('H', 0.0)
    params = TdglParams(
        kappa=params_dict['kappa'], omega=params_dict['omega'],
        H=tuple(H) if isinstance(H, list) else H,
        dt=params_dict['dt'], order=params_dict['order'],
    )
    state = init_state(mesh, params, memory_budget_mb, system=system)
    try:
        state = with_fields(state, psi, A, gamma, t, n)
    except ValueError as e:
        raise CheckpointError(f"自由度長度與空間不符: {e}") from e
    logger.info(f"自檢查點恢復: step {n}, t={t:g}")
    return state, params


def read_mesh_source(path: Union[str, Path]) -> Dict[str, Any]:
    """讀取檢查點記錄的網格來源；舊檢查點沒有此欄位時回傳空 dict"""
    path = Path(path)
    if not path.exists():
        raise CheckpointError(f"檢查點不存在: {path}")
    try:
        with np.load(path, allow_pickle=False) as data:
            if 'mesh_source' not in data.files:
                return {}
            source = json.loads(str(data['mesh_source']))
    except (ValueError, OSError) as e:
        raise CheckpointError(f"無法讀取檢查點 {path}: {e}") from e
    if not isinstance(source, dict):
        raise CheckpointError(f"檢查點的網格來源格式錯誤: {source!r}")
    return source
