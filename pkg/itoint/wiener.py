"""
Wiener paths on time grids.

Paths exist only at the knots of a TimeGrid; asking for any other time is an
error rather than an interpolation. Finer resolutions of the same sample point
are obtained with Brownian-bridge refinement, which never touches the values
already present at the coarse knots.
"""

import logging
from dataclasses import dataclass, field
from typing import Callable, Iterable, Iterator, Optional, Sequence

import numpy as np

from .errors import OffGridError, RefinementMismatchError, UsageError
from .rng import PurposeTag, SeedSpec, derive_seed, gaussian_stream

logger = logging.getLogger(__name__)

# Relative tolerance when matching a requested time to a stored knot
KNOT_RTOL = 1e-12

# Knots that are not dyadic fractions of the base horizon are refined last
_MAX_DYADIC_LEVEL = 62


def _frozen(array: np.ndarray) -> np.ndarray:
    array = np.array(array, dtype=np.float64)
    array.setflags(write=False)
    return array


@dataclass(frozen=True, eq=False)
class TimeGrid:
    """Strictly increasing knots 0 = t0 < t1 < ... < tn."""

    knots: np.ndarray

    def __post_init__(self) -> None:
        knots = _frozen(self.knots)
        if knots.ndim != 1 or knots.size < 2:
            raise UsageError("A time grid needs at least two knots")
        if not np.all(np.isfinite(knots)):
            raise UsageError("Grid knots must be finite")
        if knots[0] != 0.0:
            raise UsageError(f"Grid must start at 0, got {knots[0]}")
        if np.any(np.diff(knots) <= 0.0):
            raise UsageError("Grid knots must be strictly increasing")
        object.__setattr__(self, "knots", knots)

    @classmethod
    def uniform(cls, steps: int, horizon: float = 1.0) -> "TimeGrid":
        """Uniform grid with `steps` intervals on [0, horizon]."""
        if steps < 1 or horizon <= 0.0:
            raise UsageError(f"Invalid uniform grid: steps={steps}, horizon={horizon}")
        # horizon * i / steps keeps dyadic levels exactly nested
        return cls(horizon * np.arange(steps + 1, dtype=np.float64) / steps)

    @classmethod
    def dyadic(cls, level: int, horizon: float = 1.0) -> "TimeGrid":
        """Grid with 2**level equal steps on [0, horizon]."""
        if level < 0:
            raise UsageError(f"Dyadic level must be non-negative, got {level}")
        return cls.uniform(2**level, horizon)

    @classmethod
    def union(cls, *grids: "TimeGrid") -> "TimeGrid":
        """Smallest grid containing every knot of every given grid."""
        if not grids:
            raise UsageError("union needs at least one grid")
        return cls(np.unique(np.concatenate([g.knots for g in grids])))

    @property
    def horizon(self) -> float:
        return float(self.knots[-1])

    @property
    def size(self) -> int:
        """Number of intervals."""
        return int(self.knots.size - 1)

    @property
    def steps(self) -> np.ndarray:
        return np.diff(self.knots)

    def _tolerance(self) -> float:
        return KNOT_RTOL * max(1.0, self.horizon)

    def indices_of(self, times: Iterable[float]) -> np.ndarray:
        """
        Knot indices of the given times.

        Raises:
            OffGridError: If any time is not a knot of this grid
        """
        times = np.atleast_1d(np.asarray(times, dtype=np.float64))
        pos = np.clip(np.searchsorted(self.knots, times), 0, self.size)
        below = np.clip(pos - 1, 0, self.size)
        nearest = np.where(
            np.abs(self.knots[below] - times) < np.abs(self.knots[pos] - times), below, pos
        )
        off = np.abs(self.knots[nearest] - times) > self._tolerance()
        if np.any(off):
            raise OffGridError(f"Time {times[off][0]!r} is not a knot of the grid")
        return nearest

    def index_of(self, t: float) -> int:
        return int(self.indices_of([t])[0])

    def contains(self, times: Iterable[float]) -> bool:
        try:
            self.indices_of(times)
        except OffGridError:
            return False
        return True

    def is_superset_of(self, other: "TimeGrid") -> bool:
        return self.contains(other.knots)

    def restrict(self, horizon: float) -> "TimeGrid":
        """The knots in [0, horizon]; horizon must be a knot."""
        return TimeGrid(self.knots[: self.index_of(horizon) + 1])

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, TimeGrid):
            return NotImplemented
        return bool(np.array_equal(self.knots, other.knots))

    def __hash__(self) -> int:
        return hash(self.knots.tobytes())

    def __repr__(self) -> str:
        return f"TimeGrid(size={self.size}, horizon={self.horizon})"


@dataclass(frozen=True, eq=False)
class WienerPath:
    """One sampled trajectory: a value per knot, starting at 0."""

    grid: TimeGrid
    values: np.ndarray

    def __post_init__(self) -> None:
        values = _frozen(self.values)
        if values.shape != self.grid.knots.shape:
            raise UsageError(
                f"Path has {values.size} values for {self.grid.knots.size} knots"
            )
        if values[0] != 0.0:
            raise UsageError(f"A Wiener path starts at 0, got {values[0]}")
        object.__setattr__(self, "values", values)

    @property
    def horizon(self) -> float:
        return self.grid.horizon

    def value_at(self, t: float) -> float:
        """Stored value at knot t; off-grid times raise OffGridError."""
        return float(self.values[self.grid.index_of(t)])

    def values_at(self, times: Iterable[float]) -> np.ndarray:
        return self.values[self.grid.indices_of(times)]

    def restrict(self, grid: TimeGrid) -> "WienerPath":
        """The same path observed only on a coarser grid."""
        return WienerPath(grid, self.values[self.grid.indices_of(grid.knots)])

    def increments(self) -> np.ndarray:
        return np.diff(self.values)


def _increments_to_values(grid: TimeGrid, normals: np.ndarray) -> np.ndarray:
    """Cumulate scaled normals (n_paths, n_steps) into path values."""
    scaled = normals * np.sqrt(grid.steps)
    values = np.zeros((normals.shape[0], grid.knots.size))
    np.cumsum(scaled, axis=1, out=values[:, 1:])
    return values


def sample_path(grid: TimeGrid, seed: SeedSpec) -> WienerPath:
    """
    Sample a standard Wiener path on a grid.

    Args:
        grid: Time grid
        seed: Stream for the increments

    Returns:
        WienerPath with independent N(0, t_i - t_{i-1}) increments
    """
    normals = gaussian_stream(seed, grid.size)[np.newaxis, :]
    return WienerPath(grid, _increments_to_values(grid, normals)[0])


def _dyadic_levels(times: np.ndarray, reference: float) -> np.ndarray:
    """Coarsest k with times * 2**k / reference integral (capped for non-dyadic times)."""
    ratio = times / reference
    levels = np.full(times.shape, _MAX_DYADIC_LEVEL, dtype=np.int64)
    for k in range(_MAX_DYADIC_LEVEL - 1, -1, -1):
        scaled = ratio * float(2**k)
        exact = np.abs(scaled - np.round(scaled)) <= 1e-9
        levels = np.where(exact, k, levels)
    return levels


def refine_values(
    values: np.ndarray,
    grid: TimeGrid,
    fine_grid: TimeGrid,
    draws: Callable[[int], np.ndarray],
) -> np.ndarray:
    """
    Brownian-bridge refinement of a batch of paths.

    Inserted knots are filled coarsest-dyadic-level first, then left to right,
    each conditioned on its nearest already-filled neighbours. Knots beyond the
    original horizon are filled with free Wiener increments.

    Args:
        values: Path values on `grid`, shape (n_paths, n_knots)
        grid: Grid of the given values
        fine_grid: Target grid, a superset of `grid`
        draws: Callable returning standard normals of shape (n_paths, count),
            consumed in the fill order

    Returns:
        Values on `fine_grid`, shape (n_paths, fine_grid.knots.size)

    Raises:
        RefinementMismatchError: If fine_grid is not a superset of grid
    """
    try:
        original = fine_grid.indices_of(grid.knots)
    except OffGridError as e:
        raise RefinementMismatchError(f"Fine grid does not refine the path grid: {e}")

    values = np.atleast_2d(values)
    t = fine_grid.knots
    filled = np.zeros(t.size, dtype=bool)
    filled[original] = True
    out = np.empty((values.shape[0], t.size))
    out[:, original] = values

    inserted = np.flatnonzero(~filled)
    if inserted.size == 0:
        return out

    levels = _dyadic_levels(t[inserted], grid.horizon)
    order = np.lexsort((inserted, levels))
    draw_column = np.empty(t.size, dtype=np.int64)
    draw_column[inserted[order]] = np.arange(inserted.size)
    normals = np.atleast_2d(draws(inserted.size))

    for level in np.unique(levels):
        group = inserted[levels == level]
        filled_idx = np.flatnonzero(filled)
        pos = np.searchsorted(filled_idx, group)
        left_filled = filled_idx[pos - 1]
        right_filled = np.where(pos < filled_idx.size, filled_idx[np.minimum(pos, filled_idx.size - 1)], -1)

        # runs of group knots with no filled knot between them are filled in sequence
        filled_count = np.cumsum(filled)
        new_run = np.concatenate([[True], filled_count[group[1:]] != filled_count[group[:-1]]])
        run_start = np.maximum.accumulate(np.where(new_run, np.arange(group.size), 0))
        rank = np.arange(group.size) - run_start

        for r in range(int(rank.max()) + 1):
            members = np.flatnonzero(rank == r)
            knot = group[members]
            left = left_filled[members] if r == 0 else group[members - 1]
            right = right_filled[members]
            bounded = right >= 0

            a = t[left]
            s = t[knot]
            b = np.where(bounded, t[np.maximum(right, 0)], np.inf)
            w_a = out[:, left]
            w_b = out[:, np.maximum(right, 0)]

            weight = np.where(bounded, (s - a) / np.where(bounded, b - a, 1.0), 0.0)
            variance = np.where(bounded, (s - a) * (b - s) / np.where(bounded, b - a, 1.0), s - a)
            mean = w_a + weight * np.where(bounded, w_b - w_a, 0.0)
            out[:, knot] = mean + np.sqrt(variance) * normals[:, draw_column[knot]]

        filled[group] = True

    return out


def refine(path: WienerPath, fine_grid: TimeGrid, seed: SeedSpec) -> WienerPath:
    """
    Refine a path onto a finer grid on the same sample point.

    Original knot values are copied bit for bit; each inserted knot is drawn
    from the Brownian-bridge law given its neighbours.

    Raises:
        RefinementMismatchError: If fine_grid is not a superset of the path's grid
    """
    values = refine_values(
        path.values[np.newaxis, :],
        path.grid,
        fine_grid,
        lambda count: gaussian_stream(seed, count)[np.newaxis, :],
    )
    return WienerPath(fine_grid, values[0])


def value_at(path: WienerPath, t: float) -> float:
    """Stored value of a path at knot t."""
    return path.value_at(t)


def resample_after(path: WienerPath, t: float, seed: SeedSpec) -> WienerPath:
    """
    Copy of a path that agrees up to knot t and continues with fresh increments.
    """
    cut = path.grid.index_of(t)
    if cut >= path.grid.size:
        return path
    tail_grid = path.grid.knots[cut:] - path.grid.knots[cut]
    normals = gaussian_stream(seed, tail_grid.size - 1)
    tail = np.cumsum(normals * np.sqrt(np.diff(tail_grid)))
    values = np.array(path.values)
    values[cut + 1:] = values[cut] + tail
    return WienerPath(path.grid, values)


@dataclass(frozen=True)
class PathEnsemble:
    """
    A finite sample of paths addressed by index.

    Path i depends only on (master_seed, i, base grid, grid): it is sampled on
    the base grid and bridge-refined onto `grid` when the two differ.
    """

    master_seed: int
    grid: TimeGrid
    count: int
    base_grid: Optional[TimeGrid] = field(default=None)

    def __post_init__(self) -> None:
        if self.count < 1:
            raise UsageError(f"Ensemble needs at least one path, got {self.count}")
        if self.base_grid is not None and not self.grid.is_superset_of(self.base_grid):
            raise RefinementMismatchError("Ensemble grid does not refine its base grid")

    @property
    def sampling_grid(self) -> TimeGrid:
        return self.base_grid if self.base_grid is not None else self.grid

    def refined(self, fine_grid: TimeGrid) -> "PathEnsemble":
        """The same sample points observed on a finer grid."""
        base = self.sampling_grid
        if not fine_grid.is_superset_of(base):
            raise RefinementMismatchError("Requested grid does not refine the ensemble's base grid")
        if fine_grid == base:
            return PathEnsemble(self.master_seed, base, self.count)
        return PathEnsemble(self.master_seed, fine_grid, self.count, base_grid=base)

    def path(self, index: int) -> WienerPath:
        if not 0 <= index < self.count:
            raise UsageError(f"Path index {index} outside ensemble of {self.count}")
        base = sample_path(self.sampling_grid, derive_seed(self.master_seed, index, PurposeTag.PATH_INCREMENTS))
        if self.base_grid is None:
            return base
        return refine(base, self.grid, derive_seed(self.master_seed, index, PurposeTag.BRIDGE_REFINEMENT))

    def values(self, indices: Sequence[int]) -> np.ndarray:
        """
        Values of several paths on the ensemble grid, one row per index.

        Each row equals `path(index).values` exactly.
        """
        indices = [int(i) for i in indices]
        base = self.sampling_grid
        normals = np.stack([
            gaussian_stream(derive_seed(self.master_seed, i, PurposeTag.PATH_INCREMENTS), base.size)
            for i in indices
        ])
        values = _increments_to_values(base, normals)
        if self.base_grid is None:
            return values

        def bridge_draws(count: int) -> np.ndarray:
            return np.stack([
                gaussian_stream(derive_seed(self.master_seed, i, PurposeTag.BRIDGE_REFINEMENT), count)
                for i in indices
            ])

        return refine_values(values, base, self.grid, bridge_draws)

    def chunks(self, chunk_size: int) -> Iterator[range]:
        """Consecutive index ranges covering the ensemble."""
        if chunk_size < 1:
            raise UsageError(f"chunk_size must be positive, got {chunk_size}")
        for start in range(0, self.count, chunk_size):
            yield range(start, min(start + chunk_size, self.count))
