"""Bubble-tower solutions of (-Delta)^m u = K u^p with numerical certification.

Module map:

- ``kelvin``, ``riesz``, ``radial_grid``: exact radial calculus and Riesz potentials
- ``param_select``: geometry, placement and the tightened sequences k_i
- ``envelope``, ``background``, ``correction``, ``picard``: the truncated
  nonlinearity, the super-solution and the monotone solve for u0
- ``assembly``: u, K, the set S, gradient checks and the sphere pullback
- ``pipeline``, ``cli``: orchestration, the JSON report and ``bubbletower run``
"""
from .kelvin import Dimensions

__version__ = "0.1.0"

__all__ = ["Dimensions", "__version__"]
