"""Observability laboratory.

Discrete semigroups, spectral projections and observation operators on
truncated grids, with empirical checks of uncertainty, dissipation and
final-state observability inequalities, and a finite-dimensional
control/observation duality driver.
"""

__version__ = "1.0.0"
