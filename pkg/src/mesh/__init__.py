"""
網格模組

這個模組包含結構化與非結構化單純形網格的產生、匯入與定向。
"""

from .mesh import Mesh, MeshError, build_mesh, orient_entities, locate_points
from .generators import generate_unit_square_mesh, generate_unit_cube_mesh
from .notched_disk import generate_notched_disk_mesh
from .gmsh_io import MshParseError, read_msh, write_msh

__all__ = [
    'Mesh', 'MeshError', 'MshParseError',
    'build_mesh', 'orient_entities', 'locate_points',
    'generate_unit_square_mesh', 'generate_unit_cube_mesh', 'generate_notched_disk_mesh',
    'read_msh', 'write_msh',
]
