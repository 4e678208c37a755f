"""
收斂階估計測試

標記 slow 的測試是完整的收斂研究（以 --runslow 啟用）。
"""

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from src.data_models import ElementFamily, ValueKind
from src.fem import build_space, interpolate
from src.mesh import generate_unit_square_mesh
from src.verification import (
    AcceptanceContext, AcceptanceRulesEngine, ConvergenceReport, ManufacturedCase, MethodAgreementRule,
    compare_methods, degeneracy_rules, graphical_study, lorenz_rules, richardson_study,
    temporal_gauge_rules,
)
from src.verification.convergence import (
    QUANTITIES, REPORT_COLUMNS, least_squares_slope, mesh_difference, richardson_order, sweep_frame,
)


def make_report(omega=1.0, method='richardson', orders=None, order=1):
    orders = orders or {q: 2.0 for q in QUANTITIES}
    errors = {q: [1e-2, 2.5e-3] for q in QUANTITIES}
    return ConvergenceReport(case='tdgl-2d', omega=omega, order=order, method=method,
                             levels=[32, 64], errors=errors, orders=orders)


# ============================================================================
# 階數公式
# ============================================================================

class TestOrderFormulas:

    def test_richardson_values(self):
        assert richardson_order(4.0, 1.0) == pytest.approx(2.0)
        assert richardson_order(1.0, 1.0) == pytest.approx(0.0)
        assert richardson_order(1.0, 2.0) == pytest.approx(-1.0)

    @pytest.mark.parametrize("pair", [(0.0, 1.0), (1.0, 0.0), (-1.0, 1.0), (math.nan, 1.0), (1.0, math.inf)])
    def test_richardson_rejects_invalid(self, pair):
        with pytest.raises(ValueError):
            richardson_order(*pair)

    @settings(max_examples=50)
    @given(p=st.floats(0.5, 5.0), C=st.floats(1e-3, 1e3))
    def test_slope_recovers_power_law(self, p, C):
        levels = [8, 16, 32]
        errors = [C * (1.0 / m) ** p for m in levels]
        assert least_squares_slope(levels, errors) == pytest.approx(p, rel=1e-9)

    @settings(max_examples=30)
    @given(scale=st.floats(1e-6, 1e6))
    def test_slope_scale_invariant(self, scale):
        levels = [4, 8, 16, 32]
        errors = [0.3, 0.09, 0.02, 0.006]
        assert least_squares_slope(levels, [scale * e for e in errors]) == pytest.approx(
            least_squares_slope(levels, errors), abs=1e-9)


# ============================================================================
# 報表
# ============================================================================

class TestReport:

    def test_frame_columns_and_rows(self):
        frame = make_report().to_frame()
        assert list(frame.columns) == REPORT_COLUMNS
        assert len(frame) == 2 * len(QUANTITIES)
        assert set(frame['order_method']) == {'richardson'}
        assert list(frame['quantity'].unique()) == list(QUANTITIES)

    def test_summary_rounds(self):
        report = make_report(orders={q: 1.234567 for q in QUANTITIES})
        assert report.summary() == {q: 1.2346 for q in QUANTITIES}

    def test_sweep_frame_order(self):
        frame = sweep_frame([make_report(omega=0.0), make_report(omega=1.0), make_report(omega=1e-2)])
        assert list(frame.columns) == ['omega'] + REPORT_COLUMNS
        assert list(frame['omega'].unique()) == [1.0, 1e-2, 0.0]
        first = frame[frame['omega'] == 1.0]
        assert list(first['quantity'].unique()) == list(QUANTITIES)
        assert list(first['M'].iloc[:2]) == [32, 64]

    def test_empty_sweep(self):
        assert list(sweep_frame([]).columns) == ['omega'] + REPORT_COLUMNS

    def test_compare_methods(self):
        a = make_report(orders={q: 2.0 for q in QUANTITIES})
        b = make_report(method='graphical', orders={q: 1.8 for q in QUANTITIES})
        diff = compare_methods(a, b)
        assert set(diff) == set(QUANTITIES)
        assert diff['A'] == pytest.approx(0.2)


# ============================================================================
# 網格差與插值收斂
# ============================================================================

class TestMeshDifference:

    def test_identical_linear_interpolants(self):
        fn = lambda x: 1.0 + 2.0 * x[..., 0] - x[..., 1] + 0.5j * x[..., 1]
        coarse = interpolate(build_space(generate_unit_square_mesh(4), ElementFamily.LAGRANGE, 1,
                                         ValueKind.COMPLEX_SCALAR), fn)
        fine = interpolate(build_space(generate_unit_square_mesh(8), ElementFamily.LAGRANGE, 1,
                                       ValueKind.COMPLEX_SCALAR), fn)
        assert mesh_difference(coarse, fine) == pytest.approx(0.0, abs=1e-12)

    def test_nonlinear_difference_positive(self):
        fn = lambda x: np.sin(3.0 * x[..., 0]) + 0j
        spaces = [build_space(generate_unit_square_mesh(m), ElementFamily.LAGRANGE, 1, ValueKind.COMPLEX_SCALAR)
                  for m in (4, 8)]
        assert mesh_difference(interpolate(spaces[0], fn), interpolate(spaces[1], fn)) > 1e-4


class TestGraphicalInterpolation:

    @pytest.fixture(scope="class")
    def report(self):
        case = ManufacturedCase.create('tdgl-2d', kappa=1.0, omega=1.0)
        return graphical_study(case, 1.0, [4, 8, 16], order=1, interpolate_only=True)

    def test_levels_and_errors(self, report):
        assert report.method == 'graphical'
        assert report.levels == [4, 8, 16]
        for q in QUANTITIES:
            errors = report.errors[q]
            assert len(errors) == 3
            assert errors[0] > errors[-1] > 0

    def test_interpolation_slopes(self, report):
        assert report.orders['psi'] == pytest.approx(2.0, abs=0.3)
        assert report.orders['A'] > 1.7
        assert report.orders['gamma'] > 2.5
        assert len(report.segment_orders['psi']) == 2
        assert report.gamma_time_integrated == []

    def test_levels_validated(self):
        case = ManufacturedCase.create('tdgl-2d')
        with pytest.raises(ValueError):
            graphical_study(case, 1.0, [8], order=1)
        with pytest.raises(ValueError):
            graphical_study(case, 1.0, [8, 4], order=1)

    def test_richardson_level_validated(self):
        with pytest.raises(ValueError):
            richardson_study(ManufacturedCase.create('tdgl-2d'), 1.0, 0, 1e-3, 1, order=1)


class TestShortRichardson:

    def test_report_shape(self):
        case = ManufacturedCase.create('tdgl-2d', kappa=1.0, omega=1.0)
        report = richardson_study(case, 1.0, 2, 1e-3, 2, order=1)
        assert report.levels == [4, 8]
        assert all(len(report.errors[q]) == 2 for q in QUANTITIES)
        assert all(np.isfinite(report.orders[q]) for q in QUANTITIES)


# ============================================================================
# 完整研究
# ============================================================================

def _evaluate(reports, rules):
    engine = AcceptanceRulesEngine()
    for rule in rules:
        engine.add_rule(rule)
    findings = engine.run_analysis(AcceptanceContext(reports=list(reports)))
    return [f for f in findings if f.rule_id != 'FORCING_ORACLE']


@pytest.mark.slow
class TestFullStudies:

    def test_lorenz_first_order(self):
        case = ManufacturedCase.create('tdgl-2d', kappa=1.0)
        report = richardson_study(case, 1.0, 16, 1e-3, 125, order=1)
        for q in QUANTITIES:
            assert report.orders[q] == pytest.approx(2.0, abs=0.10)

    def test_gauge_degeneracy(self):
        case = ManufacturedCase.create('tdgl-2d', kappa=1.0)
        reports = [richardson_study(case, omega, 16, 1e-3, 125, order=1)
                   for omega in (1e-2, 1e-3, 1e-5, 0.0)]
        assert _evaluate(reports, degeneracy_rules()) == []

    def test_lorenz_second_order(self):
        case = ManufacturedCase.create('tdgl-2d', kappa=1.0)
        reports = [richardson_study(case, omega, 16, 1e-3, 125, order=2) for omega in (1.0, 0.0)]
        assert _evaluate(reports, lorenz_rules(2) + temporal_gauge_rules(2)) == []

    def test_method_agreement(self):
        case = ManufacturedCase.create('tdgl-2d', kappa=1.0)
        reports = [richardson_study(case, 1.0, 16, 1e-3, 125, order=1),
                   graphical_study(case, 1.0, [16, 32, 64], order=1)]
        assert _evaluate(reports, [MethodAgreementRule('A', 0.35)]) == []

    def test_cube_lowest_order(self):
        case = ManufacturedCase.create('tdgl-3d', kappa=1.0)
        reports = [richardson_study(case, omega, 10, 1e-3, 100, order=0, memory_budget_mb=2048)
                   for omega in (1.0, 0.0)]
        assert _evaluate(reports, lorenz_rules(0, dim=3) + temporal_gauge_rules(0, dim=3)) == []
