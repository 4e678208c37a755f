"""
驗收規則引擎測試
"""

import math

import pandas as pd
import pytest

from src.verification import (
    AcceptanceContext, AcceptanceRulesEngine, ConvergenceReport, EnergyDecayRule, EnergyWindowRule,
    MethodAgreementRule, OrderSpreadRule, Severity, VortexCountRule, degeneracy_rules, lorenz_rules,
    temporal_gauge_rules,
)
from src.verification.acceptance import FiniteOrdersRule, ForcingOracleRule, OrderGapRule, OrderWindowRule
from src.verification.convergence import QUANTITIES


def report(omega=1.0, method='richardson', order=1, **orders):
    values = {q: 2.0 for q in QUANTITIES}
    values.update(orders)
    errors = {q: [1e-2, 2.5e-3] for q in QUANTITIES}
    return ConvergenceReport(case='tdgl-2d', omega=omega, order=order, method=method,
                             levels=[32, 64], errors=errors, orders=values)


def observables(energies, counts=None, diffs=None):
    n = len(energies)
    return pd.DataFrame({
        'step': range(0, 10 * n, 10),
        'energy': energies,
        'rel_energy_diff': diffs if diffs is not None else [math.nan] + [1e-10] * (n - 1),
        'vortex_count': counts if counts is not None else [0] * n,
    })


def degenerate_sweep():
    """r = 1 時符合退化準則的一組報表"""
    return [
        report(1e-2, A=1.95, div_A=1.95),
        report(1e-3, div_A=1.2),
        report(1e-5, div_A=0.1),
        report(0.0, A=1.0, div_A=-0.04),
    ]


# ============================================================================
# 個別規則
# ============================================================================

class TestRules:

    def test_finite_orders(self):
        rule = FiniteOrdersRule()
        assert rule.evaluate(AcceptanceContext(reports=[report()])) == []
        bad = report(psi=math.nan)
        bad.errors['A'] = [0.0, 1e-3]
        findings = rule.evaluate(AcceptanceContext(reports=[bad]))
        assert len(findings) == 1
        assert findings[0].severity is Severity.CRITICAL
        assert {d['quantity'] for d in findings[0].details} == {'psi', 'A'}

    def test_forcing_oracle(self):
        rule = ForcingOracleRule(1e-6)
        ok = AcceptanceContext(forcing_residuals={'tdgl-2d@1': {'psi': 1e-9, 'A': 2e-9}})
        assert rule.evaluate(ok) == []
        bad = AcceptanceContext(forcing_residuals={'tdgl-2d@0': {'psi': 1e-6, 'A': 0.0}})
        assert rule.evaluate(bad)[0].details[0]['case'] == 'tdgl-2d@0'

    def test_order_window_filters_by_omega_and_order(self):
        rule = OrderWindowRule("W", 'A', 0.0, (0.9, 1.15))
        context = AcceptanceContext(reports=[report(1.0, A=2.0), report(0.0, order=2, A=3.0)])
        assert rule.evaluate(context) == []
        context.reports.append(report(0.0, A=1.5))
        assert rule.evaluate(context)[0].details[0]['order'] == 1.5

    def test_order_window_ignores_graphical(self):
        rule = OrderWindowRule("W", 'A', 1.0, (1.9, 2.1))
        assert rule.evaluate(AcceptanceContext(reports=[report(method='graphical', A=0.5)])) == []

    def test_order_gap(self):
        rule = OrderGapRule("GAP", 'div_A', 1e-2, 1e-3, 0.2)
        assert rule.evaluate(AcceptanceContext(reports=[report(1e-2)])) == []
        flat = AcceptanceContext(reports=[report(1e-2, div_A=1.9), report(1e-3, div_A=1.8)])
        assert rule.evaluate(flat)[0].details[0]['gap'] == pytest.approx(0.1)
        steep = AcceptanceContext(reports=[report(1e-2, div_A=1.9), report(1e-3, div_A=1.0)])
        assert rule.evaluate(steep) == []

    def test_method_agreement(self):
        rule = MethodAgreementRule('A', 0.35)
        context = AcceptanceContext(reports=[report(1.0, A=2.0), report(1.0, 'graphical', A=1.8),
                                             report(0.0, A=1.0), report(0.0, 'graphical', A=1.5)])
        findings = rule.evaluate(context)
        assert len(findings) == 1
        assert findings[0].details == [{'omega': 0.0, 'difference': pytest.approx(0.5)}]

    def test_order_spread(self):
        rule = OrderSpreadRule("SPREAD", ('psi', 'A'), 0.1, order=0)
        single = AcceptanceContext(reports=[report(1.0, order=0)])
        assert rule.evaluate(single) == []
        stable = AcceptanceContext(reports=[report(1.0, order=0, A=1.0), report(0.0, order=0, A=1.05)])
        assert rule.evaluate(stable) == []
        moving = AcceptanceContext(reports=[report(1.0, order=0, A=1.0), report(0.0, order=0, A=0.7)])
        assert moving.reports and rule.evaluate(moving)[0].details[0]['quantity'] == 'A'

    def test_energy_decay(self):
        rule = EnergyDecayRule(1e-8)
        assert rule.evaluate(AcceptanceContext()) == []
        assert rule.evaluate(AcceptanceContext(observables=observables([3.0, 2.0]))) == []
        stalled = observables([3.0, 2.0], diffs=[math.nan, 1e-3])
        assert rule.evaluate(AcceptanceContext(observables=stalled))[0].details[0]['rel_energy_diff'] == 1e-3

    def test_energy_window(self):
        rule = EnergyWindowRule(16.4711, 0.5)
        assert rule.evaluate(AcceptanceContext()) == []
        assert rule.evaluate(AcceptanceContext(observables=observables([20.0, 16.2]))) == []
        findings = rule.evaluate(AcceptanceContext(observables=observables([20.0, 17.5])))
        assert findings[0].rule_id == 'ENERGY_WINDOW'
        assert findings[0].details[0]['energy'] == 17.5

    def test_vortex_count(self):
        rule = VortexCountRule({20, 21, 22}, stable_steps=20)
        settled = observables([1.0] * 5, counts=[3, 15, 21, 21, 21])
        assert rule.evaluate(AcceptanceContext(observables=settled)) == []
        wrong = observables([1.0] * 3, counts=[0, 10, 18])
        assert rule.evaluate(AcceptanceContext(observables=wrong))[0].details[0] == {'vortex_count': 18}
        moving = observables([1.0] * 4, counts=[0, 20, 22, 21])
        details = rule.evaluate(AcceptanceContext(observables=moving))[0].details
        assert details == [{'unstable_counts': [20, 21, 22]}]


# ============================================================================
# 規則組
# ============================================================================

class TestRuleSets:

    def test_lorenz_first_order(self):
        rules = lorenz_rules(1)
        assert len(rules) == len(QUANTITIES)
        context = AcceptanceContext(reports=[report(1.0)])
        assert [f for r in rules for f in r.evaluate(context)] == []
        off = AcceptanceContext(reports=[report(1.0, gamma=1.85)])
        assert [f.rule_id for r in rules for f in r.evaluate(off)] == ['LORENZ_2D_R1_GAMMA']

    def test_lorenz_second_order_targets(self):
        rules = {r.quantity: r.window for r in lorenz_rules(2)}
        assert rules['gamma'] == pytest.approx((3.85, 4.15))
        assert rules['psi'] == pytest.approx((2.85, 3.15))

    def test_lorenz_3d(self):
        rules = lorenz_rules(0, dim=3)
        assert {r.rule_id for r in rules} >= {'LORENZ_3D_R0_PSI', 'LORENZ_3D_R0_DIV_A'}
        assert {r.quantity: r.window for r in rules}['psi'] == pytest.approx((1.81, 2.11))

    def test_degeneracy_passes_on_expected_sweep(self):
        context = AcceptanceContext(reports=degenerate_sweep())
        assert [f for r in degeneracy_rules() for f in r.evaluate(context)] == []

    def test_degeneracy_detects_missing_tipping_point(self):
        reports = degenerate_sweep()
        reports[1] = report(1e-3, div_A=1.9)
        ids = [f.rule_id for r in degeneracy_rules() for f in r.evaluate(AcceptanceContext(reports=reports))]
        assert ids == ['TIPPING_POINT']

    def test_temporal_gauge_dispatch(self):
        assert [r.rule_id for r in temporal_gauge_rules(2)] == ['TEMPORAL_R2_DIV_A']
        assert [r.rule_id for r in temporal_gauge_rules(0, dim=3)] == ['TEMPORAL_3D_DIV_A', 'GAUGE_STABLE_3D']
        assert len(temporal_gauge_rules(1)) == len(degeneracy_rules())


# ============================================================================
# 引擎
# ============================================================================

class TestEngine:

    def test_default_rules(self):
        engine = AcceptanceRulesEngine()
        assert [r['rule_id'] for r in engine.list_rules()] == ['FINITE_ORDERS', 'FORCING_ORACLE']
        assert engine.get_rule('FORCING_ORACLE').tol == 1e-6
        assert engine.get_rule('UNKNOWN') is None

    def test_add_remove(self):
        engine = AcceptanceRulesEngine([])
        engine.add_rule(EnergyDecayRule())
        assert engine.get_rule('ENERGY_DECAY') is not None
        engine.remove_rule('ENERGY_DECAY')
        assert engine.rules == []

    def test_summary_and_failure(self):
        engine = AcceptanceRulesEngine()
        for rule in lorenz_rules(1):
            engine.add_rule(rule)
        context = AcceptanceContext(reports=[report(1.0, A=1.5)],
                                    forcing_residuals={'tdgl-2d@1': {'psi': 1e-9, 'A': 1e-9}})
        findings = engine.run_analysis(context)
        summary = engine.get_summary(findings)
        assert summary == {'total_findings': 1, 'by_severity': {'HIGH': 1}, 'by_rule': {'LORENZ_2D_R1_A': 1}}
        assert not AcceptanceRulesEngine.is_failure(findings)
        assert AcceptanceRulesEngine.is_failure(findings, strict=True)
        assert list(engine.get_findings_by_severity(findings)) == ['HIGH']

    def test_critical_always_fails(self):
        engine = AcceptanceRulesEngine()
        context = AcceptanceContext(forcing_residuals={'tdgl-3d@0': {'psi': 1.0, 'A': 0.0}})
        findings = engine.run_analysis(context)
        assert AcceptanceRulesEngine.is_failure(findings, strict=False)

    def test_rule_subset(self):
        engine = AcceptanceRulesEngine()
        context = AcceptanceContext(forcing_residuals={'x': {'psi': 1.0}})
        assert engine.run_analysis(context, rule_ids=['FINITE_ORDERS']) == []
