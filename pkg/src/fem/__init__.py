"""
有限元素核心模組

參考元素、求積、全域自由度編號與形式組裝。
"""

from .quadrature import QuadratureRule, simplex_rule
from .reference import ReferenceElement, UnsupportedSpaceError, reference_element
from .spaces import FunctionSpace, Tabulation, build_space
from .assembly import (
    QuadratureContext, assemble_mass, assemble_stiffness, assemble_divdiv,
    assemble_mixed_curl, assemble_weighted_mass, assemble_weighted_vector,
)
from .fields import Field, interpolate, l2_error, l2_norm

__all__ = [
    'QuadratureRule', 'simplex_rule',
    'ReferenceElement', 'UnsupportedSpaceError', 'reference_element',
    'FunctionSpace', 'Tabulation', 'build_space',
    'QuadratureContext', 'assemble_mass', 'assemble_stiffness', 'assemble_divdiv',
    'assemble_mixed_curl', 'assemble_weighted_mass', 'assemble_weighted_vector',
    'Field', 'interpolate', 'l2_error', 'l2_norm',
]
