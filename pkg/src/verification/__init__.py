from .manufactured import (
    ManufacturedCase, ManufacturedSolution, check_forcing, forcing_2d, forcing_3d,
    forcing_residual, solution_2d, solution_3d, solution_heat_2d,
)
from .convergence import (
    QUANTITIES, ConvergenceReport, compare_methods, exact_errors, exact_state,
    graphical_study, least_squares_slope, mesh_difference, richardson_order,
    richardson_study, simulate_case, sweep_frame,
)
from .acceptance import (
    AcceptanceContext, AcceptanceRule, AcceptanceRulesEngine, EnergyDecayRule, EnergyWindowRule,
    Finding, FiniteOrdersRule, ForcingOracleRule, MethodAgreementRule, OrderGapRule, OrderSpreadRule,
    OrderWindowRule, Severity, VortexCountRule, degeneracy_rules, lorenz_rules, temporal_gauge_rules,
)
