"""
稀疏線性代數模組
"""

from .sparse_solver import (
    ConstraintConflictError, DirichletLifting, Factorization, FactorizationError,
    IterativeFactorization, eliminate_dirichlet, factorization_count, factorize, solve,
)

__all__ = [
    'ConstraintConflictError', 'DirichletLifting', 'Factorization', 'FactorizationError',
    'IterativeFactorization', 'eliminate_dirichlet', 'factorization_count', 'factorize', 'solve',
]
