"""
Integrand processes.

Adaptedness is structural: every functional receives a PathPrefix, and a
PathPrefix refuses reads past its cutoff. Simple processes carry one
coefficient functional per interval, each bound to the prefix that ends at
the interval's left knot.
"""

import logging
from dataclasses import dataclass, field
from typing import Callable, List, Optional, Sequence, Tuple

import numpy as np
from pydantic import BaseModel, Field

from .errors import OffGridError, PrefixReadError, UsageError
from .rng import PurposeTag, derive_seed
from .wiener import TimeGrid, WienerPath, resample_after

logger = logging.getLogger(__name__)

Coefficient = Callable[["PathPrefix"], float]
Evaluator = Callable[[float, "PathPrefix"], float]
StateFunction = Callable[[np.ndarray], np.ndarray]


@dataclass(frozen=True)
class PathPrefix:
    """Read access to a path up to (and including) a cutoff knot."""

    path: WienerPath
    cutoff: float

    def __post_init__(self) -> None:
        # the cutoff itself must be observable
        self.path.grid.index_of(self.cutoff)

    def value_at(self, t: float) -> float:
        if t > self.cutoff + self.path.grid._tolerance():
            raise PrefixReadError(f"Read at t={t} beyond prefix cutoff {self.cutoff}")
        return self.path.value_at(t)

    def current(self) -> float:
        """W at the cutoff."""
        return self.path.value_at(self.cutoff)

    def knots(self) -> np.ndarray:
        return self.path.grid.knots[: self.path.grid.index_of(self.cutoff) + 1]

    def values(self) -> np.ndarray:
        return self.path.values[: self.path.grid.index_of(self.cutoff) + 1]


@dataclass(frozen=True, eq=False)
class SimpleProcess:
    """
    b = c0 1{0} + sum_i c_i 1(t_{i-1}, t_i].

    c0 reads the prefix at 0 and c_i reads the prefix at t_{i-1}.
    """

    knots: np.ndarray
    coefficients: Tuple[Coefficient, ...]

    def __post_init__(self) -> None:
        knots = TimeGrid(self.knots).knots
        coefficients = tuple(self.coefficients)
        if len(coefficients) != knots.size:
            raise UsageError(
                f"A simple process on {knots.size} knots needs {knots.size} coefficients, "
                f"got {len(coefficients)}"
            )
        object.__setattr__(self, "knots", knots)
        object.__setattr__(self, "coefficients", coefficients)

    @classmethod
    def from_values(cls, knots: Sequence[float], values: Sequence[float]) -> "SimpleProcess":
        """Simple process with deterministic coefficients."""
        return cls(np.asarray(knots, dtype=np.float64), tuple(_constant(float(v)) for v in values))

    @property
    def grid(self) -> TimeGrid:
        return TimeGrid(self.knots)

    @property
    def size(self) -> int:
        """Number of half-open intervals."""
        return int(self.knots.size - 1)

    def cutoff(self, i: int) -> float:
        """Prefix cutoff of coefficient i."""
        return 0.0 if i == 0 else float(self.knots[i - 1])

    def coefficient(self, i: int, path: WienerPath) -> float:
        return float(self.coefficients[i](PathPrefix(path, self.cutoff(i))))

    def coefficient_values(self, path: WienerPath) -> np.ndarray:
        """c_0, ..., c_n on one path."""
        return np.array([self.coefficient(i, path) for i in range(self.knots.size)])

    def interval_index(self, t: float) -> int:
        """0 for t = 0, i for t in (t_{i-1}, t_i], n + 1 beyond t_n."""
        if t < 0.0:
            raise UsageError(f"Simple processes live on t >= 0, got {t}")
        if t == 0.0:
            return 0
        return int(np.searchsorted(self.knots, t, side="left"))

    def combine(self, alpha: float, other: "SimpleProcess", beta: float) -> "SimpleProcess":
        """alpha * self + beta * other on the same knots."""
        if not np.array_equal(self.knots, other.knots):
            raise UsageError("Linear combinations need identical knots")
        return SimpleProcess(
            self.knots,
            tuple(_linear(alpha, a, beta, b) for a, b in zip(self.coefficients, other.coefficients)),
        )


def _constant(value: float) -> Coefficient:
    return lambda prefix: value


def _linear(alpha: float, a: Coefficient, beta: float, b: Coefficient) -> Coefficient:
    return lambda prefix: alpha * a(prefix) + beta * b(prefix)


def eval_simple(sp: SimpleProcess, t: float, path: WienerPath) -> float:
    """
    Value of a simple process at time t on one path.

    Returns c0 at t = 0, c_i on (t_{i-1}, t_i] and 0 after the last knot.

    Raises:
        OffGridError: If the prefix knot needed by the coefficient is not on the path grid
    """
    i = sp.interval_index(t)
    if i > sp.size:
        return 0.0
    return sp.coefficient(i, path)


@dataclass(frozen=True)
class IntegrandFunctional:
    """
    An adapted integrand b(t) = evaluator(t, prefix up to t).

    `state_function`, when given, states that b(t) = phi(W(t)) and lets
    ensembles be evaluated column-wise; `predictable` gives the value on the
    interval starting at t (defaults to the evaluator, which is the same thing
    for pathwise-continuous integrands).
    """

    name: str
    evaluator: Evaluator
    h2_claim: bool
    pathwise_continuous_claim: bool
    state_function: Optional[StateFunction] = field(default=None, compare=False)
    predictable: Optional[Evaluator] = field(default=None, compare=False)
    l2_oracle: Optional[Callable[[float, int], float]] = field(default=None, compare=False)
    # E int_0^t b_k(s)^2 ds for the untruncated level-k approximation
    isometry_oracle: Optional[Callable[[float, int], float]] = field(default=None, compare=False)

    def evaluate(self, t: float, path: WienerPath) -> float:
        return float(self.evaluator(t, PathPrefix(path, t)))

    def evaluate_predictable(self, t: float, path: WienerPath) -> float:
        """Value on the interval that opens at t."""
        rule = self.predictable or self.evaluator
        return float(rule(t, PathPrefix(path, t)))

    def evaluate_batch(
        self,
        grid: TimeGrid,
        values: np.ndarray,
        knot_indices: np.ndarray,
        predictable: bool = False,
    ) -> np.ndarray:
        """
        Evaluate on many paths at once.

        Args:
            grid: Grid of the value rows
            values: Path values, shape (n_paths, n_knots)
            knot_indices: Knots to evaluate at
            predictable: Use the value on the interval opening at each knot

        Returns:
            Array of shape (n_paths, len(knot_indices))
        """
        if self.state_function is not None and (not predictable or self.predictable is None):
            return np.asarray(self.state_function(values[:, knot_indices]), dtype=np.float64)

        times = grid.knots[knot_indices]
        rule = self.evaluate_predictable if predictable else self.evaluate
        out = np.empty((values.shape[0], len(knot_indices)))
        for row in range(values.shape[0]):
            path = WienerPath(grid, values[row])
            out[row] = [rule(float(t), path) for t in times]
        return out


def markov_functional(
    name: str,
    phi: StateFunction,
    h2_claim: bool,
    pathwise_continuous_claim: bool = True,
    l2_oracle: Optional[Callable[[float, int], float]] = None,
    isometry_oracle: Optional[Callable[[float, int], float]] = None,
) -> IntegrandFunctional:
    """Integrand b(t) = phi(W(t))."""

    def evaluator(t: float, prefix: PathPrefix) -> float:
        return float(phi(np.array([prefix.current()]))[0])

    return IntegrandFunctional(
        name=name,
        evaluator=evaluator,
        h2_claim=h2_claim,
        pathwise_continuous_claim=pathwise_continuous_claim,
        state_function=phi,
        l2_oracle=l2_oracle,
        isometry_oracle=isometry_oracle,
    )


def from_simple(sp: SimpleProcess, name: str = "simple") -> IntegrandFunctional:
    """View a simple process as a general integrand."""

    def evaluator(t: float, prefix: PathPrefix) -> float:
        return eval_simple(sp, t, prefix.path)

    def predictable(t: float, prefix: PathPrefix) -> float:
        # the interval opening at t is covered by the coefficient read at its left knot
        i = int(np.searchsorted(sp.knots, t, side="right"))
        if i > sp.size:
            return 0.0
        return sp.coefficient(i, prefix.path)

    return IntegrandFunctional(
        name=name,
        evaluator=evaluator,
        h2_claim=True,
        pathwise_continuous_claim=False,
        predictable=predictable,
    )


class AdaptednessReport(BaseModel):
    """Outcome of an adaptedness probe."""

    passed: bool = Field(..., description="All evaluations agreed and no prefix violation occurred")
    time: float = Field(..., description="Evaluation time")
    perturbations: int = Field(..., description="Number of resampled continuations")
    evaluations: List[float] = Field(default_factory=list, description="Values on the original and perturbed paths")
    violation: Optional[str] = Field(None, description="Prefix read error message, if any")


def perturbed_paths(
    path: WienerPath,
    t: float,
    perturbations: int,
    master_seed: int = 0,
    first_index: int = 0,
) -> List[WienerPath]:
    """Copies of a path with everything after t replaced by fresh continuations."""
    return [
        resample_after(path, t, derive_seed(master_seed, first_index + k, PurposeTag.CONTINUATION))
        for k in range(perturbations)
    ]


def probe_adaptedness(
    f: IntegrandFunctional,
    t: float,
    path: WienerPath,
    perturbations: int,
    master_seed: int = 0,
    first_index: int = 0,
) -> AdaptednessReport:
    """
    Check that f(t) does not change when the path after t changes.

    A read beyond the prefix is reported as a failed probe, not raised.
    """
    if t >= path.horizon:
        raise UsageError(f"Probe time {t} must precede the path horizon {path.horizon}")
    if perturbations < 1:
        raise UsageError(f"perturbations must be positive, got {perturbations}")

    evaluations: List[float] = []
    try:
        for candidate in [path] + perturbed_paths(path, t, perturbations, master_seed, first_index):
            evaluations.append(f.evaluate(t, candidate))
    except PrefixReadError as e:
        logger.debug("Adaptedness probe for %s hit a prefix violation: %s", f.name, e)
        return AdaptednessReport(
            passed=False, time=t, perturbations=perturbations,
            evaluations=evaluations, violation=str(e),
        )

    reference = np.float64(evaluations[0]).tobytes()
    passed = all(np.float64(v).tobytes() == reference for v in evaluations)
    return AdaptednessReport(passed=passed, time=t, perturbations=perturbations, evaluations=evaluations)


def probe_coefficients(
    sp: SimpleProcess,
    path: WienerPath,
    perturbations: int,
    master_seed: int = 0,
) -> List[AdaptednessReport]:
    """Probe every coefficient of a simple process at its own prefix cutoff."""
    reports = []
    for i in range(sp.knots.size):
        cutoff = sp.cutoff(i)
        coefficient = sp.coefficients[i]
        functional = IntegrandFunctional(
            name=f"c{i}",
            evaluator=lambda t, prefix, c=coefficient: c(prefix),
            h2_claim=True,
            pathwise_continuous_claim=False,
        )
        if cutoff >= path.horizon:
            # nothing after the cutoff to perturb
            value = sp.coefficient(i, path)
            reports.append(AdaptednessReport(passed=True, time=cutoff, perturbations=0, evaluations=[value]))
            continue
        reports.append(probe_adaptedness(functional, cutoff, path, perturbations, master_seed))
    return reports
