"""
CSV 輸出（RFC 4180 風格，小數點為 '.'）
"""

import logging
from pathlib import Path
from typing import Sequence, Union

import pandas as pd

from src.tdgl.runner import ObservableLog
from src.verification.convergence import ConvergenceReport, sweep_frame

logger = logging.getLogger(__name__)

FLOAT_FORMAT = "%.10g"


def _write(frame: pd.DataFrame, path: Union[str, Path]) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    frame.to_csv(path, index=False, float_format=FLOAT_FORMAT, lineterminator="\n")
    logger.info(f"CSV 已寫入: {path} ({len(frame)} 列)")
    return path


def write_observables_csv(log: ObservableLog, path: Union[str, Path]) -> Path:
    """欄位：step, t, energy, rel_energy_diff, vortex_count, normal_zone_fraction（另附 omega）"""
    frame = log.to_frame()
    columns = ['step', 't', 'energy', 'rel_energy_diff', 'vortex_count', 'normal_zone_fraction', 'omega']
    return _write(frame[columns], path)


def write_report_csv(reports: Union[ConvergenceReport, Sequence[ConvergenceReport]],
                     path: Union[str, Path]) -> Path:
    """單一報表寫出 quantity, M, error, order_method, order；多個報表時加上 omega 欄"""
    if isinstance(reports, ConvergenceReport):
        return _write(reports.to_frame(), path)
    return _write(sweep_frame(reports), path)
