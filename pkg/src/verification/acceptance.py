"""
驗收規則引擎

每條驗收準則是一個 AcceptanceRule，對收斂報表、源項殘差或觀測紀錄求值並回傳
Finding。引擎依嚴重程度彙整；任何 CRITICAL 發現都會讓整個流程以非零狀態結束。
"""

from abc import ABC, abstractmethod
from dataclasses import dataclass, field
from enum import Enum
from typing import Any, Dict, Iterable, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd
from loguru import logger

from .convergence import QUANTITIES, ConvergenceReport, compare_methods


class Severity(Enum):
    """嚴重程度枚舉"""
    CRITICAL = "CRITICAL"
    HIGH = "HIGH"
    MEDIUM = "MEDIUM"
    LOW = "LOW"
    INFO = "INFO"


@dataclass
class Finding:
    """驗收發現"""
    rule_id: str
    rule_name: str
    severity: Severity
    description: str
    details: List[Dict[str, Any]]
    metadata: Dict[str, Any] = field(default_factory=dict)


@dataclass
class AcceptanceContext:
    """規則求值的輸入"""
    reports: List[ConvergenceReport] = field(default_factory=list)
    forcing_residuals: Dict[str, Dict[str, float]] = field(default_factory=dict)
    observables: Optional[pd.DataFrame] = None

    def find_reports(self, method: Optional[str] = None, omega: Optional[float] = None,
                     order: Optional[int] = None) -> List[ConvergenceReport]:
        return [
            r for r in self.reports
            if (method is None or r.method == method)
            and (omega is None or np.isclose(r.omega, omega, rtol=1e-12, atol=0.0))
            and (order is None or r.order == order)
        ]


class AcceptanceRule(ABC):
    """驗收規則基類"""

    def __init__(self, rule_id: str, rule_name: str, description: str, severity: Severity):
        self.rule_id = rule_id
        self.rule_name = rule_name
        self.description = description
        self.severity = severity

    @abstractmethod
    def evaluate(self, context: AcceptanceContext) -> List[Finding]:
        """評估規則並返回發現"""

    def _finding(self, details: List[Dict[str, Any]], **metadata) -> Finding:
        return Finding(self.rule_id, self.rule_name, self.severity, self.description, details, metadata)


class FiniteOrdersRule(AcceptanceRule):
    """所有報表的誤差為正、階數有限"""

    def __init__(self):
        super().__init__("FINITE_ORDERS", "有限的收斂階", "誤差必須為正且估計階數有限", Severity.CRITICAL)

    def evaluate(self, context):
        bad = []
        for report in context.reports:
            for q in QUANTITIES:
                errors = report.errors.get(q, [])
                order = report.orders.get(q)
                if any(not (e > 0 and np.isfinite(e)) for e in errors) or order is None or not np.isfinite(order):
                    bad.append({'case': report.case, 'omega': report.omega, 'quantity': q})
        return [self._finding(bad, count=len(bad))] if bad else []


class ForcingOracleRule(AcceptanceRule):
    """人造源項的有限差分殘差"""

    def __init__(self, tol: float = 1e-6):
        super().__init__("FORCING_ORACLE", "源項殘差檢查", f"源項殘差必須小於 {tol:g}", Severity.CRITICAL)
        self.tol = tol

    def evaluate(self, context):
        bad = [
            {'case': name, **residuals}
            for name, residuals in sorted(context.forcing_residuals.items())
            if max(residuals.values()) >= self.tol
        ]
        return [self._finding(bad)] if bad else []


class OrderWindowRule(AcceptanceRule):
    """指定 (方法, ω, r) 報表中某個量的階數須落在區間內"""

    def __init__(self, rule_id: str, quantity: str, omega: float, window: Tuple[float, float],
                 order: int = 1, method: str = 'richardson', severity: Severity = Severity.HIGH):
        lo, hi = window
        super().__init__(rule_id, f"{quantity} 收斂階 (ω={omega:g}, r={order})",
                         f"{method} 階數須介於 [{lo:g}, {hi:g}]", severity)
        self.quantity, self.omega, self.window = quantity, omega, window
        self.order, self.method = order, method

    def evaluate(self, context):
        lo, hi = self.window
        bad = [
            {'case': r.case, 'omega': r.omega, 'order': r.orders[self.quantity]}
            for r in context.find_reports(self.method, self.omega, self.order)
            if not lo <= r.orders[self.quantity] <= hi
        ]
        return [self._finding(bad)] if bad else []


class OrderGapRule(AcceptanceRule):
    """兩個 ω 之間同一量的階數差（規範轉折點）"""

    def __init__(self, rule_id: str, quantity: str, omega_high: float, omega_low: float,
                 min_gap: float, order: int = 1):
        super().__init__(rule_id, f"{quantity} 轉折 ({omega_high:g} → {omega_low:g})",
                         f"階數差須至少 {min_gap:g}", Severity.HIGH)
        self.quantity, self.omega_high, self.omega_low = quantity, omega_high, omega_low
        self.min_gap, self.order = min_gap, order

    def evaluate(self, context):
        high = context.find_reports('richardson', self.omega_high, self.order)
        low = context.find_reports('richardson', self.omega_low, self.order)
        if not high or not low:
            return []
        gap = high[0].orders[self.quantity] - low[0].orders[self.quantity]
        return [] if gap >= self.min_gap else [self._finding([{'gap': gap}])]


class MethodAgreementRule(AcceptanceRule):
    """Richardson 與圖解法的階數一致性"""

    def __init__(self, quantity: str = 'A', tol: float = 0.35, order: int = 1):
        super().__init__("METHOD_AGREEMENT", f"{quantity} 方法一致性",
                         f"兩種方法的階數差須小於 {tol:g}", Severity.HIGH)
        self.quantity, self.tol, self.order = quantity, tol, order

    def evaluate(self, context):
        bad = []
        for graphical in context.find_reports('graphical', order=self.order):
            for richardson in context.find_reports('richardson', graphical.omega, self.order):
                diff = compare_methods(richardson, graphical).get(self.quantity)
                if diff is not None and diff > self.tol:
                    bad.append({'omega': graphical.omega, 'difference': diff})
        return [self._finding(bad)] if bad else []


class EnergyDecayRule(AcceptanceRule):
    """最後一步的相對能量差"""

    def __init__(self, bound: float = 1e-8, severity: Severity = Severity.HIGH):
        super().__init__("ENERGY_DECAY", "能量收斂", f"最終相對能量差須小於 {bound:g}", severity)
        self.bound = bound

    def evaluate(self, context):
        if context.observables is None:
            return []
        diffs = context.observables['rel_energy_diff'].dropna()
        if diffs.empty or diffs.iloc[-1] < self.bound:
            return []
        return [self._finding([{'rel_energy_diff': float(diffs.iloc[-1])}])]


class VortexCountRule(AcceptanceRule):
    """最終渦旋數須在允許集合中"""

    def __init__(self, allowed: Iterable[int], stable_steps: int = 0):
        allowed = sorted(set(allowed))
        super().__init__("VORTEX_COUNT", "渦旋數", f"最終渦旋數須屬於 {allowed}", Severity.HIGH)
        self.allowed = allowed
        self.stable_steps = stable_steps

    def evaluate(self, context):
        if context.observables is None or 'vortex_count' not in context.observables:
            return []
        frame = context.observables.dropna(subset=['vortex_count'])
        if frame.empty:
            return []
        final = int(frame['vortex_count'].iloc[-1])
        details = []
        if final not in self.allowed:
            details.append({'vortex_count': final})
        if self.stable_steps:
            window = frame[frame['step'] >= frame['step'].iloc[-1] - self.stable_steps]
            if window['vortex_count'].nunique() > 1:
                details.append({'unstable_counts': sorted(window['vortex_count'].astype(int).unique().tolist())})
        return [self._finding(details)] if details else []


class OrderSpreadRule(AcceptanceRule):
    """同一 r 的各 ω 報表之間，指定量的階數變化幅度"""

    def __init__(self, rule_id: str, quantities: Sequence[str], max_spread: float, order: int = 0):
        super().__init__(rule_id, "規範參數不影響的收斂階",
                         f"{', '.join(quantities)} 在各 ω 間的階數變化須小於 {max_spread:g}", Severity.HIGH)
        self.quantities, self.max_spread, self.order = tuple(quantities), max_spread, order

    def evaluate(self, context):
        reports = context.find_reports('richardson', order=self.order)
        if len(reports) < 2:
            return []
        bad = []
        for q in self.quantities:
            values = [r.orders[q] for r in reports]
            spread = max(values) - min(values)
            if spread >= self.max_spread:
                bad.append({'quantity': q, 'spread': spread})
        return [self._finding(bad)] if bad else []


class EnergyWindowRule(AcceptanceRule):
    """最終 Gibbs 自由能須在目標值附近"""

    def __init__(self, target: float, tol: float, severity: Severity = Severity.HIGH):
        super().__init__("ENERGY_WINDOW", "最終自由能", f"最終自由能須介於 {target:g} ± {tol:g}", severity)
        self.target, self.tol = target, tol

    def evaluate(self, context):
        if context.observables is None:
            return []
        energies = context.observables['energy'].dropna()
        if energies.empty:
            return []
        final = float(energies.iloc[-1])
        if abs(final - self.target) <= self.tol:
            return []
        return [self._finding([{'energy': final, 'target': self.target}])]


def lorenz_rules(order: int = 1, dim: int = 2) -> List[AcceptanceRule]:
    """ω = 1 時五個量的階數窗"""
    if dim == 3:
        targets, tol = {'psi': 1.96, 'A': 1.0, 'gamma': 1.0, 'curl_gamma': 1.0, 'div_A': 1.0}, 0.15
    elif order == 1:
        targets, tol = dict.fromkeys(QUANTITIES, 2.0), 0.10
    else:
        targets, tol = {'psi': 3.0, 'A': 3.0, 'gamma': 4.0, 'curl_gamma': 3.0, 'div_A': 3.0}, 0.15
    return [OrderWindowRule(f"LORENZ_{dim}D_R{order}_{q.upper()}", q, 1.0, (v - tol, v + tol), order=order)
            for q, v in targets.items()]


def temporal_gauge_rules(order: int = 1, dim: int = 2) -> List[AcceptanceRule]:
    """ω → 0 時的退化準則（依維度與 r）"""
    if dim == 3:
        return [
            OrderWindowRule("TEMPORAL_3D_DIV_A", 'div_A', 0.0, (-0.20, 0.20), order=order),
            OrderSpreadRule("GAUGE_STABLE_3D", ('psi', 'A', 'gamma', 'curl_gamma'), 0.1, order=order),
        ]
    if order == 2:
        return [OrderWindowRule("TEMPORAL_R2_DIV_A", 'div_A', 0.0, (0.8, 1.2), order=2)]
    return degeneracy_rules()


def degeneracy_rules() -> List[AcceptanceRule]:
    """r = 1 的規範退化準則"""
    return [
        OrderWindowRule("TEMPORAL_A", 'A', 0.0, (0.90, 1.15)),
        OrderWindowRule("TEMPORAL_DIV_A", 'div_A', 0.0, (-0.20, 0.20)),
        OrderWindowRule("SMALL_OMEGA_DIV_A", 'div_A', 1e-5, (-np.inf, 0.5)),
        OrderWindowRule("OMEGA_1E-2_A", 'A', 1e-2, (1.9, np.inf)),
        OrderWindowRule("OMEGA_1E-2_DIV_A", 'div_A', 1e-2, (1.9, np.inf)),
        OrderGapRule("TIPPING_POINT", 'div_A', 1e-2, 1e-3, 0.2),
    ]


class AcceptanceRulesEngine:
    """驗收規則引擎"""

    def __init__(self, rules: Optional[Sequence[AcceptanceRule]] = None):
        self.rules: List[AcceptanceRule] = list(rules) if rules is not None else self._load_default_rules()

    def _load_default_rules(self) -> List[AcceptanceRule]:
        """載入預設規則"""
        return [FiniteOrdersRule(), ForcingOracleRule()]

    def add_rule(self, rule: AcceptanceRule) -> None:
        """添加規則"""
        self.rules.append(rule)
        logger.debug(f"添加驗收規則: {rule.rule_name}")

    def remove_rule(self, rule_id: str) -> None:
        self.rules = [rule for rule in self.rules if rule.rule_id != rule_id]

    def get_rule(self, rule_id: str) -> Optional[AcceptanceRule]:
        for rule in self.rules:
            if rule.rule_id == rule_id:
                return rule
        return None

    def list_rules(self) -> List[Dict[str, Any]]:
        return [
            {'rule_id': r.rule_id, 'rule_name': r.rule_name,
             'description': r.description, 'severity': r.severity.value}
            for r in self.rules
        ]

    def run_analysis(self, context: AcceptanceContext, rule_ids: Optional[List[str]] = None) -> List[Finding]:
        """執行驗收規則；規則本身的例外不會被吞掉"""
        rules = self.rules if rule_ids is None else [r for r in self.rules if r.rule_id in rule_ids]
        findings: List[Finding] = []
        for rule in rules:
            result = rule.evaluate(context)
            for finding in result:
                logger.warning(f"[{finding.severity.value}] {finding.rule_name}: {finding.description} {finding.details}")
            findings.extend(result)
        logger.info(f"驗收完成: {len(rules)} 條規則, {len(findings)} 個發現")
        return findings

    def get_findings_by_severity(self, findings: List[Finding]) -> Dict[str, List[Finding]]:
        grouped: Dict[str, List[Finding]] = {}
        for finding in findings:
            grouped.setdefault(finding.severity.value, []).append(finding)
        return grouped

    def get_summary(self, findings: List[Finding]) -> Dict[str, Any]:
        """發現摘要"""
        by_severity: Dict[str, int] = {}
        by_rule: Dict[str, int] = {}
        for finding in findings:
            by_severity[finding.severity.value] = by_severity.get(finding.severity.value, 0) + 1
            by_rule[finding.rule_id] = by_rule.get(finding.rule_id, 0) + 1
        return {'total_findings': len(findings), 'by_severity': by_severity, 'by_rule': by_rule}

    @staticmethod
    def is_failure(findings: List[Finding], strict: bool = False) -> bool:
        """CRITICAL 一律失敗；strict 時 HIGH 也算失敗"""
        failing = {Severity.CRITICAL, Severity.HIGH} if strict else {Severity.CRITICAL}
        return any(f.severity in failing for f in findings)
