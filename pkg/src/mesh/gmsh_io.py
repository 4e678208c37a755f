"""
Gmsh MSH 2.2 ASCII 讀寫

支援的元素型別：
- 1: 2 節點線段（2D 邊界）
- 2: 3 節點三角形（2D cell 或 3D 邊界）
- 4: 4 節點四面體（3D cell）
- 15: 1 節點點元素（忽略）
"""

import logging
from pathlib import Path
from typing import Dict, List, Tuple, Union

import numpy as np

from .mesh import Mesh, MeshError, build_mesh

logger = logging.getLogger(__name__)

NODES_PER_TYPE = {1: 2, 2: 3, 4: 4, 15: 1}
TYPE_DIM = {1: 1, 2: 2, 4: 3, 15: 0}


class MshParseError(MeshError):
    """MSH 檔案解析失敗"""

    def __init__(self, message: str, line: int):
        super().__init__(f"第 {line} 行: {message}")
        self.line = line


class _Lines:
    """逐行讀取並記錄行號"""

    def __init__(self, text: str):
        self._lines = text.splitlines()
        self.number = 0

    def next(self) -> str:
        while self.number < len(self._lines):
            line = self._lines[self.number].strip()
            self.number += 1
            if line:
                return line
        raise MshParseError("檔案意外結束", self.number)

    def expect(self, token: str) -> None:
        line = self.next()
        if line != token:
            raise MshParseError(f"預期 {token}，讀到 {line!r}", self.number)

    def skip_section(self, name: str) -> None:
        end = '$End' + name[1:]
        while self.next() != end:
            pass

    def at_end(self) -> bool:
        return all(not line.strip() for line in self._lines[self.number:])


def _ints(lines: _Lines) -> List[int]:
    line = lines.next()
    try:
        return [int(v) for v in line.split()]
    except ValueError:
        raise MshParseError(f"預期整數，讀到 {line!r}", lines.number) from None


def read_msh(path: Union[str, Path]) -> Mesh:
    """
    讀取 Gmsh MSH 2.2 ASCII 檔案

    Args:
        path: 檔案路徑

    Returns:
        最高維度元素作為 cell、帶實體標記邊界的 Mesh
    """
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as e:
        raise MeshError(f"無法讀取網格檔案 {path}: {e}") from e

    lines = _Lines(text)
    node_ids: Dict[int, int] = {}
    coords: List[Tuple[float, float, float]] = []
    elements: Dict[int, List[Tuple[List[int], int]]] = {1: [], 2: [], 4: []}
    seen_format = False

    while not lines.at_end():
        header = lines.next()
        if header == '$MeshFormat':
            fields = lines.next().split()
            if len(fields) < 2 or not fields[0].startswith('2.') or fields[1] != '0':
                raise MshParseError(f"不支援的 MSH 版本或格式: {' '.join(fields)}", lines.number)
            lines.expect('$EndMeshFormat')
            seen_format = True
        elif header == '$Nodes':
            count = _ints(lines)[0]
            for _ in range(count):
                fields = lines.next().split()
                if len(fields) != 4:
                    raise MshParseError(f"節點行格式錯誤: {fields}", lines.number)
                node_ids[int(fields[0])] = len(coords)
                coords.append((float(fields[1]), float(fields[2]), float(fields[3])))
            lines.expect('$EndNodes')
        elif header == '$Elements':
            count = _ints(lines)[0]
            for _ in range(count):
                fields = _ints(lines)
                etype, ntags = fields[1], fields[2]
                if etype not in NODES_PER_TYPE:
                    raise MshParseError(f"不支援的元素型別 {etype}", lines.number)
                if etype == 15:
                    continue
                tags = fields[3:3 + ntags]
                nodes = fields[3 + ntags:]
                if len(nodes) != NODES_PER_TYPE[etype]:
                    raise MshParseError(f"元素型別 {etype} 的節點數不正確", lines.number)
                try:
                    local = [node_ids[n] for n in nodes]
                except KeyError as e:
                    raise MshParseError(f"元素參照未定義的節點 {e.args[0]}", lines.number) from None
                elements[etype].append((local, tags[0] if tags else 0))
            lines.expect('$EndElements')
        elif header.startswith('$'):
            logger.debug(f"略過區段 {header}")
            lines.skip_section(header)
        else:
            raise MshParseError(f"無法辨識的內容 {header!r}", lines.number)

    if not seen_format:
        raise MshParseError("缺少 $MeshFormat 區段", 1)

    cell_type = 4 if elements[4] else 2
    facet_type = 2 if cell_type == 4 else 1
    if not elements[cell_type]:
        raise MeshError(f"{path} 中沒有三角形或四面體元素")
    dim = TYPE_DIM[cell_type]

    cells = np.array([nodes for nodes, _ in elements[cell_type]], dtype=np.int64)
    used = np.unique(cells)
    remap = np.full(len(coords), -1, dtype=np.int64)
    remap[used] = np.arange(len(used))
    vertices = np.asarray(coords, dtype=float)[used, :dim]

    tagged = {}
    for nodes, tag in elements[facet_type]:
        mapped = remap[nodes]
        if np.all(mapped >= 0) and tag:
            tagged[tuple(sorted(int(v) for v in mapped))] = int(tag)

    mesh = build_mesh(vertices, remap[cells], tagged_facets=tagged)
    logger.info(f"讀取 {path.name}: {mesh.n_vertices} 個頂點, {mesh.n_cells} 個 cell, {len(tagged)} 個標記邊界面")
    return mesh


def write_msh(mesh: Mesh, path: Union[str, Path]) -> Path:
    """
    以 MSH 2.2 ASCII 格式寫出網格（邊界面附實體標記）

    Returns:
        寫出的檔案路徑
    """
    path = Path(path)
    facet_type = 1 if mesh.dim == 2 else 2
    cell_type = 2 if mesh.dim == 2 else 4

    out = ['$MeshFormat', '2.2 0 8', '$EndMeshFormat', '$Nodes', str(mesh.n_vertices)]
    padded = np.zeros((mesh.n_vertices, 3))
    padded[:, :mesh.dim] = mesh.vertices
    for i, (x, y, z) in enumerate(padded, start=1):
        out.append(f"{i} {float(x)!r} {float(y)!r} {float(z)!r}")
    out.append('$EndNodes')

    boundary = mesh.boundary_facets
    out.extend(['$Elements', str(len(boundary) + mesh.n_cells)])
    eid = 1
    for f in boundary:
        tag = int(mesh.facet_tags[f])
        nodes = ' '.join(str(v + 1) for v in mesh.facets[f])
        out.append(f"{eid} {facet_type} 2 {tag} {tag} {nodes}")
        eid += 1
    for cell in mesh.cells:
        nodes = ' '.join(str(v + 1) for v in cell)
        out.append(f"{eid} {cell_type} 2 1 1 {nodes}")
        eid += 1
    out.append('$EndElements')

    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text('\n'.join(out) + '\n')
    logger.info(f"寫出網格 {path}")
    return path
