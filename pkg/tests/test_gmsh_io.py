"""
Gmsh MSH 2.2 讀寫測試
"""

import numpy as np
import pytest

from src.mesh import MeshError, MshParseError, generate_unit_cube_mesh, generate_unit_square_mesh, read_msh, write_msh

TWO_TRIANGLES = """$MeshFormat
2.2 0 8
$EndMeshFormat
$PhysicalNames
1
1 7 "rim"
$EndPhysicalNames
$Nodes
4
10 0 0 0
20 1 0 0
30 1 1 0
40 0 1 0
$EndNodes
$Elements
5
1 15 2 0 1 10
2 1 2 7 1 10 20
3 1 2 3 2 20 30
4 2 2 1 1 10 20 30
5 2 2 1 1 10 30 40
$EndElements
"""


def _write(tmp_path, text, name="mesh.msh"):
    path = tmp_path / name
    path.write_text(text)
    return path


def test_read_two_triangles(tmp_path):
    mesh = read_msh(_write(tmp_path, TWO_TRIANGLES))
    assert mesh.dim == 2
    assert mesh.n_vertices == 4
    assert mesh.n_cells == 2
    assert mesh.volume == pytest.approx(1.0)
    tags = sorted(mesh.boundary_tags.values())
    # 兩條標記邊，其餘邊界邊為預設 1
    assert tags == [1, 1, 3, 7]


@pytest.mark.parametrize("mesh_factory", [lambda: generate_unit_square_mesh(3), lambda: generate_unit_cube_mesh(1)])
def test_write_then_read(tmp_path, mesh_factory):
    mesh = mesh_factory()
    path = write_msh(mesh, tmp_path / "out.msh")
    loaded = read_msh(path)
    np.testing.assert_array_equal(loaded.vertices, mesh.vertices)
    np.testing.assert_array_equal(loaded.cells, mesh.cells)
    assert loaded.mesh_hash() == mesh.mesh_hash()


def test_unsupported_version(tmp_path):
    text = TWO_TRIANGLES.replace("2.2 0 8", "4.1 0 8")
    with pytest.raises(MshParseError) as info:
        read_msh(_write(tmp_path, text))
    assert info.value.line == 2


def test_binary_rejected(tmp_path):
    with pytest.raises(MshParseError):
        read_msh(_write(tmp_path, TWO_TRIANGLES.replace("2.2 0 8", "2.2 1 8")))


def test_unknown_element_type(tmp_path):
    text = TWO_TRIANGLES.replace("5 2 2 1 1 10 30 40", "5 3 2 1 1 10 20 30 40")
    with pytest.raises(MshParseError) as info:
        read_msh(_write(tmp_path, text))
    assert "3" in str(info.value)


def test_undefined_node(tmp_path):
    text = TWO_TRIANGLES.replace("5 2 2 1 1 10 30 40", "5 2 2 1 1 10 30 99")
    with pytest.raises(MshParseError):
        read_msh(_write(tmp_path, text))


def test_truncated_file(tmp_path):
    text = TWO_TRIANGLES.split("$Elements")[0] + "$Elements\n5\n"
    with pytest.raises(MshParseError):
        read_msh(_write(tmp_path, text))


def test_missing_file(tmp_path):
    with pytest.raises(MeshError):
        read_msh(tmp_path / "missing.msh")
