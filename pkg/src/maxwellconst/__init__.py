"""Numerical companion for Maxwell-type constants of the de Rham complex.

The package computes Friedrichs, Poincare and Maxwell constants on box
grids, verifies the inequalities relating them, and evaluates the
transformation constants used to carry the bounds to one-chart domains.
"""

__version__ = "0.1.0"

SCHEMA_VERSION = "1.0"
