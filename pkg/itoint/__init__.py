"""
Itô Integral Engine

This package constructs stochastic integrals of adapted integrands against
seeded Wiener paths, as limits of simple-process integrals over nested dyadic
grids, and runs Monte Carlo checks of the integral's defining properties:
uniqueness across schemes, isometry, martingale increments, path continuity
and Itô's lemma.
"""

__version__ = "0.1.0"
