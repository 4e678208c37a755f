"""
VTK legacy ASCII 輸出（UNSTRUCTURED_GRID）

數值以固定格式寫出，相同輸入產生逐位元相同的檔案。
"""

import logging
from pathlib import Path
from typing import Dict, Mapping, Optional, Union

import numpy as np

from src.data_models import TdglParams
from src.mesh.mesh import Mesh
from src.tdgl.observables import electric_potential, supercurrent

logger = logging.getLogger(__name__)

VTK_CELL_TYPES = {2: 5, 3: 10}  # 三角形、四面體


def _fmt(value: float) -> str:
    return f"{float(value):.10e}"


def _data_block(kind: str, data: Mapping[str, np.ndarray], count: int) -> list:
    lines = [f"{kind} {count}"]
    for name in sorted(data):
        values = np.asarray(data[name], dtype=float)
        if values.shape[0] != count:
            raise ValueError(f"{kind} 欄位 {name} 長度 {values.shape[0]} 與 {count} 不符")
        if values.ndim == 1:
            lines += [f"SCALARS {name} double 1", "LOOKUP_TABLE default"]
            lines += [_fmt(v) for v in values]
        else:
            padded = np.zeros((count, 3))
            padded[:, :values.shape[1]] = values
            lines.append(f"VECTORS {name} double")
            lines += [" ".join(_fmt(v) for v in row) for row in padded]
    return lines


def write_vtk(mesh: Mesh, path: Union[str, Path],
              point_data: Optional[Mapping[str, np.ndarray]] = None,
              cell_data: Optional[Mapping[str, np.ndarray]] = None,
              title: str = "TDGL") -> Path:
    """
    寫出網格與場

    Args:
        point_data: 頂點上的純量 (V,) 或向量 (V, d)
        cell_data: cell 上的純量 (C,) 或向量 (C, d)
    """
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    V, C = mesh.n_vertices, mesh.n_cells
    nv = mesh.cells.shape[1]

    coords = np.zeros((V, 3))
    coords[:, :mesh.dim] = mesh.vertices
    lines = ["# vtk DataFile Version 3.0", title.replace("\n", " "), "ASCII",
             "DATASET UNSTRUCTURED_GRID", f"POINTS {V} double"]
    lines += [" ".join(_fmt(v) for v in row) for row in coords]
    lines.append(f"CELLS {C} {C * (nv + 1)}")
    lines += [f"{nv} " + " ".join(str(int(i)) for i in cell) for cell in mesh.cells]
    lines.append(f"CELL_TYPES {C}")
    lines += [str(VTK_CELL_TYPES[mesh.dim])] * C
    if point_data:
        lines += _data_block("POINT_DATA", point_data, V)
    if cell_data:
        lines += _data_block("CELL_DATA", cell_data, C)

    with open(path, "w", encoding="ascii", newline="\n") as f:
        f.write("\n".join(lines) + "\n")
    logger.info(f"VTK 已寫入: {path}")
    return path


def state_fields(state, params: TdglParams) -> Dict[str, Dict[str, np.ndarray]]:
    """
    狀態的輸出欄位：頂點上的 |ψ| 與相位，cell 上的 A、curl A（取自 γ）、φ 與 J
    """
    psi_vertices = state.psi.coeffs[:state.mesh.n_vertices]
    return {
        'point_data': {
            'psi_abs': np.abs(psi_vertices),
            'psi_phase': np.angle(psi_vertices),
        },
        'cell_data': {
            'A': state.A.cell_average(),
            'curl_A': state.gamma.cell_average(),
            'phi': electric_potential(state, params),
            'J': supercurrent(state, params),
        },
    }


def write_state_vtk(state, params: TdglParams, path: Union[str, Path]) -> Path:
    """以 state_fields 寫出一個快照"""
    fields = state_fields(state, params)
    return write_vtk(state.mesh, path, fields['point_data'], fields['cell_data'],
                     title=f"TDGL step {state.n} t={state.t:g}")
