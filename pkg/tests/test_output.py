"""
VTK 與 CSV 輸出測試
"""

import numpy as np
import pandas as pd
import pytest

from src.data_models import TdglParams
from src.output import write_observables_csv, write_report_csv, write_state_vtk, write_vtk
from src.tdgl import init_state, run
from src.verification import ConvergenceReport
from src.verification.convergence import QUANTITIES, REPORT_COLUMNS


def _report(omega):
    return ConvergenceReport(case='tdgl-2d', omega=omega, order=1, method='richardson', levels=[32, 64],
                             errors={q: [1.234567890123e-3, 3.1e-4] for q in QUANTITIES},
                             orders={q: 1.99594 for q in QUANTITIES})


class TestVtk:

    def test_header_and_counts(self, square_mesh, tmp_path):
        path = write_vtk(square_mesh, tmp_path / "mesh.vtk",
                         point_data={'u': np.arange(square_mesh.n_vertices, dtype=float)},
                         cell_data={'v': np.ones((square_mesh.n_cells, 2))})
        lines = path.read_text(encoding='ascii').splitlines()
        assert lines[0] == "# vtk DataFile Version 3.0"
        assert lines[2] == "ASCII"
        assert lines[3] == "DATASET UNSTRUCTURED_GRID"
        assert f"POINTS {square_mesh.n_vertices} double" in lines
        assert f"CELLS {square_mesh.n_cells} {4 * square_mesh.n_cells}" in lines
        assert lines.count("5") == square_mesh.n_cells
        assert "SCALARS u double 1" in lines
        assert "VECTORS v double" in lines

    def test_tetrahedra(self, cube_mesh, tmp_path):
        lines = write_vtk(cube_mesh, tmp_path / "cube.vtk").read_text(encoding='ascii').splitlines()
        assert f"CELL_TYPES {cube_mesh.n_cells}" in lines
        assert lines.count("10") == cube_mesh.n_cells

    def test_length_mismatch(self, square_mesh, tmp_path):
        with pytest.raises(ValueError):
            write_vtk(square_mesh, tmp_path / "bad.vtk", point_data={'u': np.ones(3)})

    def test_state_snapshot_is_deterministic(self, square_mesh, tmp_path):
        params = TdglParams(kappa=2.0, omega=1.0, H=0.5, dt=0.1, order=1)
        state = run(square_mesh, params, 2).final_state
        a = write_state_vtk(state, params, tmp_path / "a.vtk")
        b = write_state_vtk(state, params, tmp_path / "nested" / "b.vtk")
        assert a.read_bytes() == b.read_bytes()
        text = a.read_text(encoding='ascii')
        for name in ('psi_abs', 'psi_phase', 'A', 'curl_A', 'phi', 'J'):
            assert f" {name} double" in text

    def test_superconducting_state_values(self, square_mesh, tmp_path):
        params = TdglParams(kappa=2.0, omega=1.0, dt=0.1, order=1)
        path = write_state_vtk(init_state(square_mesh, params), params, tmp_path / "s.vtk")
        lines = path.read_text(encoding='ascii').splitlines()
        start = lines.index("SCALARS psi_abs double 1") + 2
        values = [float(v) for v in lines[start:start + square_mesh.n_vertices]]
        np.testing.assert_allclose(values, 1.0)


class TestCsv:

    def test_report_columns_and_format(self, tmp_path):
        path = write_report_csv(_report(1.0), tmp_path / "report.csv")
        text = path.read_text()
        assert text.splitlines()[0] == ",".join(REPORT_COLUMNS)
        assert "0.00123456789" in text
        assert "\r" not in text
        frame = pd.read_csv(path)
        assert len(frame) == 2 * len(QUANTITIES)
        assert frame['order'].iloc[0] == pytest.approx(1.99594)

    def test_sweep_has_omega_column(self, tmp_path):
        path = write_report_csv([_report(0.0), _report(1.0)], tmp_path / "sweep" / "orders.csv")
        frame = pd.read_csv(path)
        assert list(frame.columns) == ['omega'] + REPORT_COLUMNS
        assert list(frame['omega'].unique()) == [1.0, 0.0]

    def test_observables(self, square_mesh, tmp_path):
        params = TdglParams(kappa=2.0, omega=1.0, H=0.5, dt=0.1, order=1)
        log = run(square_mesh, params, 3)
        frame = pd.read_csv(write_observables_csv(log, tmp_path / "obs.csv"))
        assert list(frame.columns) == ['step', 't', 'energy', 'rel_energy_diff', 'vortex_count',
                                       'normal_zone_fraction', 'omega']
        assert list(frame['step']) == [0, 1, 2, 3]
        assert frame['energy'].notna().all()
