"""
Itô integrals of simple processes and their limits.

Sums are evaluated in summation-by-parts form,

    sum_i c_i (W_i - W_{i-1}) = c_n W_n - sum_{i<n} (c_{i+1} - c_i) W_i,   W_0 = 0,

accumulated sequentially. Refining the knots of a simple process only inserts
exact zeros into that accumulation, so the coarse and refined representations
give the same floating-point value, and constant integrands telescope exactly.
"""

import logging
from dataclasses import dataclass
from typing import List

import numpy as np
import pandas as pd
from pydantic import BaseModel, Field, model_validator

from .approximation import ApproximationScheme, approximate, coefficient_matrix
from .errors import UsageError
from .process import IntegrandFunctional, SimpleProcess
from .wiener import TimeGrid, WienerPath

logger = logging.getLogger(__name__)


def partial_integrals(coefficients: np.ndarray, w: np.ndarray) -> np.ndarray:
    """
    Running integrals of interval coefficients against W.

    Args:
        coefficients: c_1..c_m per path, shape (n_paths, m)
        w: W at the m + 1 knots per path, starting at W_0 = 0, shape (n_paths, m + 1)

    Returns:
        I at every knot, shape (n_paths, m + 1), with I_0 = 0
    """
    coefficients = np.atleast_2d(coefficients)
    w = np.atleast_2d(w)
    if w.shape[1] != coefficients.shape[1] + 1:
        raise UsageError(
            f"{coefficients.shape[1]} coefficients need {coefficients.shape[1] + 1} knots, got {w.shape[1]}"
        )
    out = np.zeros(w.shape)
    out[:, 1:] = coefficients * w[:, 1:]
    if coefficients.shape[1] > 1:
        jumps = np.diff(coefficients, axis=1) * w[:, 1:-1]
        out[:, 2:] -= np.cumsum(jumps, axis=1)
    return out


def integrate_simple(sp: SimpleProcess, t: float, path: WienerPath) -> float:
    """
    I(b)(t) for a simple process: sum_i c_i (W(min(t_i, t)) - W(t_{i-1})) over t_{i-1} < t.

    Raises:
        OffGridError: If a needed knot, or t itself when it cuts an interval,
            is not on the path grid
    """
    if t < 0.0:
        raise UsageError(f"Integration time must be non-negative, got {t}")
    if t == 0.0:
        return 0.0

    active = int(np.searchsorted(sp.knots, t, side="left"))  # intervals with t_{i-1} < t
    active = min(active, sp.size)
    points = np.array(sp.knots[: active + 1])
    if t < points[-1]:
        points[-1] = t
    w = path.values_at(points)
    coefficients = np.array([sp.coefficient(i, path) for i in range(1, active + 1)])
    return float(partial_integrals(coefficients[np.newaxis, :], w[np.newaxis, :])[0, -1])


@dataclass(frozen=True)
class IntegralPath:
    """Values of t -> I(b)(t) at every knot of a grid."""

    grid: TimeGrid
    values: np.ndarray

    def pairs(self) -> List[tuple]:
        return list(zip(self.grid.knots.tolist(), self.values.tolist()))

    def value_at(self, t: float) -> float:
        return float(self.values[self.grid.index_of(t)])


def max_increments(paths: np.ndarray) -> np.ndarray:
    """Largest absolute step of each row of knot values."""
    return np.max(np.abs(np.diff(paths, axis=1)), axis=1)


def integral_path(sp: SimpleProcess, path: WienerPath) -> IntegralPath:
    """
    The integral of a simple process at every knot of the path grid.

    Raises:
        OffGridError: If a knot of the simple process is not on the path grid
    """
    path.grid.indices_of(sp.knots)
    knots = path.grid.knots
    # coefficient covering each path interval (s_{j-1}, s_j]; zero past the last knot
    owner = np.searchsorted(sp.knots, knots[1:], side="left")
    values = np.append(sp.coefficient_values(path), 0.0)
    coefficients = values[owner]
    running = partial_integrals(coefficients[np.newaxis, :], path.values[np.newaxis, :])[0]
    return IntegralPath(path.grid, running)


class TraceLevel(BaseModel):
    """One approximation level of an integral trace."""

    level: int = Field(..., description="Dyadic level k")
    grid_size: int = Field(..., description="Number of grid steps, 2**k")
    value: float = Field(..., description="I(b_k)(t)")


class IntegralTrace(BaseModel):
    """I(b_k)(t) across approximation levels; the finest level is the accepted value."""

    t: float = Field(..., description="Evaluation time")
    levels: List[TraceLevel] = Field(..., description="Per-level values, coarse to fine")
    accepted_value: float = Field(..., description="Finest-level value")

    @model_validator(mode="after")
    def _check_levels(self) -> "IntegralTrace":
        if not self.levels:
            raise ValueError("A trace needs at least one level")
        sizes = [row.grid_size for row in self.levels]
        if any(b <= a for a, b in zip(sizes, sizes[1:])):
            raise ValueError("Trace levels must have increasing grid sizes")
        finest = self.levels[-1].value
        if not (self.accepted_value == finest or (np.isnan(finest) and np.isnan(self.accepted_value))):
            raise ValueError("accepted_value must equal the finest level value")
        return self

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame(
            [row.model_dump() for row in self.levels], columns=["level", "grid_size", "value"]
        )


def integrate_general(
    f: IntegrandFunctional,
    t: float,
    scheme: ApproximationScheme,
    path: WienerPath,
) -> IntegralTrace:
    """
    Realize I(f)(t) as the trace of I(b_k)(t) over the scheme's levels.

    Args:
        f: Integrand
        t: Evaluation time (the scheme's horizon)
        scheme: Nested approximation scheme on [0, t]
        path: Path on a grid containing the finest level

    Returns:
        IntegralTrace whose accepted value is the finest level
    """
    rows = []
    for level in scheme.levels:
        sp = approximate(f, t, scheme, level, path)
        value = integrate_simple(sp, t, path)
        logger.debug("%s level %d: I = %.6g", f.name, level, value)
        rows.append(TraceLevel(level=level, grid_size=2**level, value=value))
    return IntegralTrace(t=t, levels=rows, accepted_value=rows[-1].value)


def level_integral_paths(
    f: IntegrandFunctional,
    scheme: ApproximationScheme,
    level: int,
    grid: TimeGrid,
    values: np.ndarray,
) -> np.ndarray:
    """Integral paths of one level's approximation on the level grid, one row per path."""
    knots = scheme.grid(level).knots
    w = values[:, grid.indices_of(knots)]
    return partial_integrals(coefficient_matrix(f, scheme, level, grid, values), w)


def level_integrals(
    f: IntegrandFunctional,
    scheme: ApproximationScheme,
    grid: TimeGrid,
    values: np.ndarray,
) -> np.ndarray:
    """
    I(b_k)(t) for every level and path, shape (n_paths, n_levels).

    Row r matches integrate_general on path r level by level.
    """
    columns = [
        level_integral_paths(f, scheme, level, grid, values)[:, -1]
        for level in scheme.levels
    ]
    return np.column_stack(columns)
