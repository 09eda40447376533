"""
Approximating sequences of simple processes.

Level k of a scheme samples the integrand at the left knots of the dyadic grid
with 2**k steps on [0, t] and clamps each coefficient to [-L_k, L_k]. The
result vanishes after t and every coefficient reads only the prefix ending at
its left knot.
"""

import logging
import math
from dataclasses import dataclass
from typing import Literal, Tuple, Union

import numpy as np

from .errors import OffGridError, UsageError
from .process import IntegrandFunctional, PathPrefix, SimpleProcess, eval_simple
from .wiener import TimeGrid, WienerPath

logger = logging.getLogger(__name__)

Truncation = Union[Literal["auto", "none"], float]
QuadratureRule = Literal["left", "trapezoid"]


@dataclass(frozen=True)
class ApproximationScheme:
    """Nested dyadic grids on [0, horizon] with a truncation schedule."""

    horizon: float
    levels: Tuple[int, ...]
    truncation: Truncation = "auto"

    def __post_init__(self) -> None:
        levels = tuple(int(k) for k in self.levels)
        if not levels:
            raise UsageError("A scheme needs at least one level")
        if any(k < 0 for k in levels) or any(b <= a for a, b in zip(levels, levels[1:])):
            raise UsageError(f"Scheme levels must be strictly increasing and non-negative: {levels}")
        if self.horizon <= 0.0:
            raise UsageError(f"Scheme horizon must be positive, got {self.horizon}")
        if not isinstance(self.truncation, str) and not self.truncation > 0:
            raise UsageError(f"Truncation bound must be positive, got {self.truncation}")
        if isinstance(self.truncation, str) and self.truncation not in ("auto", "none"):
            raise UsageError(f"Unknown truncation '{self.truncation}'")
        object.__setattr__(self, "levels", levels)

    @classmethod
    def dyadic(
        cls,
        horizon: float,
        k_min: int,
        k_max: int,
        truncation: Truncation = "auto",
        level_shift: int = 0,
    ) -> "ApproximationScheme":
        """Levels k_min + shift, ..., k_max + shift."""
        if k_max < k_min:
            raise UsageError(f"k_max ({k_max}) must not be below k_min ({k_min})")
        return cls(horizon, tuple(range(k_min + level_shift, k_max + level_shift + 1)), truncation)

    def grid(self, level: int) -> TimeGrid:
        if level not in self.levels:
            raise UsageError(f"Level {level} is not part of the scheme {self.levels}")
        return TimeGrid.dyadic(level, self.horizon)

    @property
    def finest_grid(self) -> TimeGrid:
        return self.grid(self.levels[-1])

    def bound(self, level: int, f: IntegrandFunctional) -> float:
        """Truncation bound L for a level; inf means no clamping."""
        if self.truncation == "none":
            return math.inf
        if self.truncation == "auto":
            return math.inf if f.h2_claim else float(level)
        return float(self.truncation)


def _clamp(value: float, bound: float) -> float:
    if math.isinf(bound):
        return value
    return min(max(value, -bound), bound)


def _check_horizon(scheme: ApproximationScheme, t: float) -> None:
    if not math.isclose(scheme.horizon, t, rel_tol=1e-12, abs_tol=0.0):
        raise UsageError(f"Scheme is built on [0, {scheme.horizon}], not [0, {t}]")


def approximate(
    f: IntegrandFunctional,
    t: float,
    scheme: ApproximationScheme,
    level: int,
    path: WienerPath,
) -> SimpleProcess:
    """
    Simple approximation of an integrand at one scheme level.

    Args:
        f: Integrand
        t: Horizon; the result is zero after t
        scheme: Approximation scheme on [0, t]
        level: Dyadic level k of the scheme
        path: Path whose grid contains the level's knots

    Returns:
        SimpleProcess with c_i = clamp(f(t_{i-1}), +-L_k)

    Raises:
        OffGridError: If the path grid misses a knot of the level
    """
    _check_horizon(scheme, t)
    knots = scheme.grid(level).knots
    path.grid.indices_of(knots)
    bound = scheme.bound(level, f)

    def initial(prefix: PathPrefix) -> float:
        return _clamp(float(f.evaluator(0.0, prefix)), bound)

    def left_sample(left: float):
        rule = f.predictable or f.evaluator
        return lambda prefix: _clamp(float(rule(left, prefix)), bound)

    coefficients = (initial,) + tuple(left_sample(float(a)) for a in knots[:-1])
    return SimpleProcess(knots, coefficients)


def coefficient_matrix(
    f: IntegrandFunctional,
    scheme: ApproximationScheme,
    level: int,
    grid: TimeGrid,
    values: np.ndarray,
) -> np.ndarray:
    """
    Interval coefficients c_1..c_n of a level for many paths, shape (n_paths, 2**k).

    Row r equals approximate(...).coefficient_values(path_r)[1:].
    """
    knots = scheme.grid(level).knots
    left = grid.indices_of(knots[:-1])
    coefficients = f.evaluate_batch(grid, values, left, predictable=True)
    bound = scheme.bound(level, f)
    if not math.isinf(bound):
        coefficients = np.clip(coefficients, -bound, bound)
    return coefficients


def _quadrature_knots(sp_knots: np.ndarray, t: float, quadrature_grid: TimeGrid) -> np.ndarray:
    quad = quadrature_grid.knots[: quadrature_grid.index_of(t) + 1]
    inside = sp_knots[sp_knots <= t + 1e-12 * max(1.0, t)]
    try:
        TimeGrid(quad).indices_of(inside)
    except OffGridError:
        raise UsageError("Quadrature grid must refine the simple process knots on [0, t]")
    return quad


def l2_error(
    f: IntegrandFunctional,
    sp: SimpleProcess,
    t: float,
    path: WienerPath,
    quadrature_grid: TimeGrid,
    rule: QuadratureRule = "left",
) -> float:
    """
    Pathwise squared L2 distance int_0^t (f - sp)^2 ds by quadrature.

    On each quadrature interval (u_j, u_{j+1}] the simple process is constant;
    the integrand is taken at u_j (left rule) or averaged over both ends in
    squared distance (trapezoid rule).

    Raises:
        OffGridError: If the path grid misses a quadrature knot
        UsageError: If the quadrature grid does not refine the process knots
    """
    quad = _quadrature_knots(sp.knots, t, quadrature_grid)
    path.grid.indices_of(quad)

    total = 0.0
    for a, b in zip(quad[:-1], quad[1:]):
        a, b = float(a), float(b)
        level_value = eval_simple(sp, b, path)
        left = (f.evaluate_predictable(a, path) - level_value) ** 2
        if rule == "left":
            total += left * (b - a)
        else:
            right = (f.evaluate(b, path) - level_value) ** 2
            total += 0.5 * (left + right) * (b - a)
    return total


def l2_error_batch(
    f: IntegrandFunctional,
    scheme: ApproximationScheme,
    level: int,
    grid: TimeGrid,
    values: np.ndarray,
    quadrature_grid: TimeGrid,
    rule: QuadratureRule = "left",
) -> np.ndarray:
    """l2_error of the level's approximation for every row of `values`."""
    t = scheme.horizon
    knots = scheme.grid(level).knots
    quad = _quadrature_knots(knots, t, quadrature_grid)
    quad_idx = grid.indices_of(quad)

    coefficients = coefficient_matrix(f, scheme, level, grid, values)
    # quadrature interval j lies inside level interval owner[j]
    owner = np.searchsorted(knots, quad[:-1], side="right") - 1
    level_values = coefficients[:, owner]
    widths = np.diff(quad)

    left = np.square(f.evaluate_batch(grid, values, quad_idx[:-1], predictable=True) - level_values)
    if rule == "left":
        return np.sum(left * widths, axis=1)
    right = np.square(f.evaluate_batch(grid, values, quad_idx[1:]) - level_values)
    return np.sum(0.5 * (left + right) * widths, axis=1)
