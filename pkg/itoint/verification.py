"""
Empirical verification checks.

Each check draws its paths from a PathEnsemble, processes them in chunks
(optionally on a thread pool), concatenates per-path results in path order and
only then reduces, so statistics do not depend on the worker count. Every
check returns a CheckResult whose verdict is statistic <= tolerance.
"""

import concurrent.futures
import logging
import math
from dataclasses import dataclass
from typing import Any, Callable, Dict, List, Optional, Sequence

import numpy as np
import pandas as pd
from pydantic import BaseModel, Field, model_validator

from .approximation import ApproximationScheme, QuadratureRule, Truncation, coefficient_matrix, l2_error_batch
from .convergence import DEFAULT_EPS_GRID, ConvergenceReport, build_report, mean_estimate, trend_score
from .errors import InapplicableCheckError, PrefixReadError, UsageError
from .integrator import (
    IntegralTrace,
    TraceLevel,
    level_integral_paths,
    level_integrals,
    max_increments,
    partial_integrals,
)
from .library import ItoFunction
from .process import IntegrandFunctional, markov_functional, perturbed_paths, probe_adaptedness
from .wiener import PathEnsemble, TimeGrid

logger = logging.getLogger(__name__)

# isometry, martingale and quadratic-variation checks accept |z| up to this many standard errors
Z_TOLERANCE = 3.0
# trend-type checks pass when the normalized score is at most 1
SCORE_TOLERANCE = 1.0


@dataclass(frozen=True)
class Execution:
    """How an ensemble is walked."""

    chunk_size: int = 500
    workers: int = 1


DEFAULT_EXECUTION = Execution()


class CheckResult(BaseModel):
    """Outcome of one verification check."""

    name: str = Field(..., description="Check label")
    statistic: float = Field(..., description="Test statistic")
    tolerance: float = Field(..., description="Largest passing statistic")
    passed: bool = Field(..., description="statistic <= tolerance")
    diagnostics: List[Dict[str, Any]] = Field(default_factory=list, description="Per-level table rows")
    report: Optional[ConvergenceReport] = Field(None, description="Convergence report, when the check builds one")
    trace: Optional[IntegralTrace] = Field(None, description="Per-level values on the first path")

    @model_validator(mode="after")
    def _check_verdict(self) -> "CheckResult":
        if self.passed != (self.statistic <= self.tolerance):
            raise ValueError(
                f"Verdict of '{self.name}' disagrees with statistic {self.statistic} and tolerance {self.tolerance}"
            )
        return self

    @classmethod
    def judge(cls, name: str, statistic: float, tolerance: float, **details: Any) -> "CheckResult":
        statistic, tolerance = float(statistic), float(tolerance)
        result = cls(
            name=name, statistic=statistic, tolerance=tolerance,
            passed=statistic <= tolerance, **details,
        )
        logger.info(
            "%s: statistic=%.4g tolerance=%.4g %s",
            name, statistic, tolerance, "passed" if result.passed else "FAILED",
        )
        return result

    def diagnostics_frame(self) -> pd.DataFrame:
        return pd.DataFrame(self.diagnostics)

    def summary_row(self) -> Dict[str, Any]:
        return {
            "name": self.name,
            "statistic": self.statistic,
            "tolerance": self.tolerance,
            "passed": self.passed,
        }


def map_paths(
    ensemble: PathEnsemble,
    work: Callable[[np.ndarray], np.ndarray],
    execution: Execution = DEFAULT_EXECUTION,
) -> np.ndarray:
    """
    Apply `work` to value blocks of the ensemble and stack the rows in path order.

    `work` receives values of shape (chunk, n_knots) and returns one row per path.
    """
    chunks = list(ensemble.chunks(execution.chunk_size))

    def run(indices: range) -> np.ndarray:
        return np.asarray(work(ensemble.values(indices)), dtype=np.float64)

    if execution.workers > 1 and len(chunks) > 1:
        with concurrent.futures.ThreadPoolExecutor(max_workers=execution.workers) as executor:
            # map keeps submission order
            results = list(executor.map(run, chunks))
    else:
        results = [run(indices) for indices in chunks]
    return np.concatenate(results, axis=0)


def _require_horizon(scheme: ApproximationScheme, t: float) -> None:
    if not math.isclose(scheme.horizon, t, rel_tol=1e-12, abs_tol=0.0):
        raise UsageError(f"Scheme is built on [0, {scheme.horizon}], not [0, {t}]")


def _z_score(mean: float, std_error: float) -> float:
    if std_error > 0.0:
        return abs(mean) / std_error
    return 0.0 if mean == 0.0 else math.inf


def _oracle_z(mean: float, std_error: float, expected: float) -> float:
    """z of an estimate against a closed form; exact estimates match up to rounding."""
    if std_error > 0.0:
        return abs(mean - expected) / std_error
    return 0.0 if math.isclose(mean, expected, rel_tol=1e-12, abs_tol=1e-15) else math.inf


def _trace(t: float, levels: Sequence[int], row: np.ndarray) -> IntegralTrace:
    rows = [TraceLevel(level=k, grid_size=2**k, value=float(v)) for k, v in zip(levels, row)]
    return IntegralTrace(t=t, levels=rows, accepted_value=rows[-1].value)


def _level_columns(table: np.ndarray, levels: Sequence[int]) -> List[Dict[str, Any]]:
    rows = []
    for j, level in enumerate(levels):
        estimate = mean_estimate(table[:, j])
        rows.append({"level": level, "mean": estimate.value, "se": estimate.std_error})
    return rows


def check_uniqueness(
    f: IntegrandFunctional,
    t: float,
    scheme_a: ApproximationScheme,
    scheme_b: ApproximationScheme,
    ensemble: PathEnsemble,
    threshold: float = 0.05,
    eps_grid: Sequence[float] = DEFAULT_EPS_GRID,
    execution: Execution = DEFAULT_EXECUTION,
) -> CheckResult:
    """
    Two approximation schemes must agree on the same paths.

    Levels are matched by position; the differences I_A - I_B at each matched
    level feed a convergence report whose verdict is the check's verdict.

    Raises:
        OffGridError: If the ensemble grid misses a knot of either scheme
    """
    _require_horizon(scheme_a, t)
    _require_horizon(scheme_b, t)
    if len(scheme_a.levels) != len(scheme_b.levels):
        raise UsageError(
            f"Schemes need the same number of levels, got {len(scheme_a.levels)} and {len(scheme_b.levels)}"
        )
    grid = ensemble.grid

    def work(values: np.ndarray) -> np.ndarray:
        return np.column_stack([
            level_integrals(f, scheme_a, grid, values),
            level_integrals(f, scheme_b, grid, values),
        ])

    table = map_paths(ensemble, work, execution)
    m = len(scheme_a.levels)
    diffs = [table[:, j] - table[:, m + j] for j in range(m)]
    report = build_report(scheme_a.levels, diffs, threshold, eps_grid)

    diagnostics = [
        {
            "level_a": level_a,
            "level_b": level_b,
            "ky_fan": row.ky_fan,
            "ky_fan_se": row.ky_fan_se,
            "mean_abs_diff": float(np.mean(np.abs(d))),
        }
        for level_a, level_b, row, d in zip(scheme_a.levels, scheme_b.levels, report.rows, diffs)
    ]
    return CheckResult.judge(
        f"uniqueness[{f.name}]", report.score, SCORE_TOLERANCE,
        diagnostics=diagnostics, report=report, trace=_trace(t, scheme_a.levels, table[0, :m]),
    )


def check_isometry(
    f: IntegrandFunctional,
    t: float,
    level: int,
    ensemble: PathEnsemble,
    truncation: Truncation = "auto",
    execution: Execution = DEFAULT_EXECUTION,
) -> CheckResult:
    """
    E[I(b_k)(t)^2] against E[int_0^t b_k^2 ds] at one level.

    The statistic is the z of the per-path difference of the two estimators.
    When the integrand carries a closed form for E[int_0^t b_k^2 ds] and the
    level is not truncated, both estimators are also compared with it and
    the largest z is reported.

    Raises:
        InapplicableCheckError: If the integrand is not claimed to be in H2
    """
    if not f.h2_claim:
        raise InapplicableCheckError(f"Isometry needs an H2 integrand; '{f.name}' is not")
    scheme = ApproximationScheme(t, (level,), truncation)
    knots = scheme.grid(level).knots
    widths = np.diff(knots)
    grid = ensemble.grid

    def work(values: np.ndarray) -> np.ndarray:
        coefficients = coefficient_matrix(f, scheme, level, grid, values)
        integral = partial_integrals(coefficients, values[:, grid.indices_of(knots)])[:, -1]
        time_integral = np.sum(np.square(coefficients) * widths, axis=1)
        return np.column_stack([np.square(integral), time_integral])

    table = map_paths(ensemble, work, execution)
    square = mean_estimate(table[:, 0])
    time_integral = mean_estimate(table[:, 1])
    difference = mean_estimate(table[:, 0] - table[:, 1])
    row = {
        "level": level,
        "mean_square_integral": square.value,
        "se_square_integral": square.std_error,
        "mean_time_integral": time_integral.value,
        "se_time_integral": time_integral.std_error,
        "difference": difference.value,
        "se_difference": difference.std_error,
        "z_difference": _z_score(difference.value, difference.std_error),
        "expected": None,
        "z_square_integral": None,
        "z_time_integral": None,
    }
    statistic = row["z_difference"]
    if f.isometry_oracle is not None and math.isinf(scheme.bound(level, f)):
        expected = f.isometry_oracle(t, level)
        row["expected"] = expected
        row["z_square_integral"] = _oracle_z(square.value, square.std_error, expected)
        row["z_time_integral"] = _oracle_z(time_integral.value, time_integral.std_error, expected)
        statistic = max(statistic, row["z_square_integral"], row["z_time_integral"])
    return CheckResult.judge(f"isometry[{f.name}]", statistic, Z_TOLERANCE, diagnostics=[row])


def check_martingale(
    f: IntegrandFunctional,
    s: float,
    t: float,
    test_functionals: Sequence[IntegrandFunctional],
    ensemble: PathEnsemble,
    level: int = 10,
    truncation: Truncation = "auto",
    execution: Execution = DEFAULT_EXECUTION,
) -> CheckResult:
    """
    E[(I(t) - I(s)) g(s)] = 0 for every test functional g read at s.

    The statistic is the largest |mean| / SE over the test functionals.

    Raises:
        OffGridError: If s is not a knot of the level grid on [0, t]
    """
    if not 0.0 <= s < t:
        raise UsageError(f"Need 0 <= s < t, got s={s}, t={t}")
    if not test_functionals:
        raise UsageError("At least one test functional is needed")
    scheme = ApproximationScheme(t, (level,), truncation)
    level_grid = scheme.grid(level)
    s_level = level_grid.index_of(s)
    grid = ensemble.grid
    s_index = np.array([grid.index_of(s)])

    def work(values: np.ndarray) -> np.ndarray:
        paths = level_integral_paths(f, scheme, level, grid, values)
        increment = paths[:, -1] - paths[:, s_level]
        return np.column_stack([
            increment * g.evaluate_batch(grid, values, s_index)[:, 0] for g in test_functionals
        ])

    table = map_paths(ensemble, work, execution)
    diagnostics = []
    for j, g in enumerate(test_functionals):
        estimate = mean_estimate(table[:, j])
        diagnostics.append({
            "test_functional": g.name,
            "mean": estimate.value,
            "se": estimate.std_error,
            "z": _z_score(estimate.value, estimate.std_error),
        })
    statistic = max(row["z"] for row in diagnostics)
    return CheckResult.judge(f"martingale[{f.name}]", statistic, Z_TOLERANCE, diagnostics=diagnostics)


def check_continuity(
    f: IntegrandFunctional,
    t: float,
    scheme: ApproximationScheme,
    ensemble: PathEnsemble,
    execution: Execution = DEFAULT_EXECUTION,
) -> CheckResult:
    """
    Mean largest step of the integral path must shrink level by level.

    The same statistic for W itself is reported alongside.
    """
    _require_horizon(scheme, t)
    if len(scheme.levels) < 2:
        raise UsageError("Continuity needs at least two levels")
    grid = ensemble.grid

    def work(values: np.ndarray) -> np.ndarray:
        columns = []
        for level in scheme.levels:
            paths = level_integral_paths(f, scheme, level, grid, values)
            columns.append(max_increments(paths))
        for level in scheme.levels:
            w = values[:, grid.indices_of(scheme.grid(level).knots)]
            columns.append(max_increments(w))
        return np.column_stack(columns)

    table = map_paths(ensemble, work, execution)
    m = len(scheme.levels)
    diagnostics = _level_columns(table[:, :m], scheme.levels)
    for j, row in enumerate(diagnostics):
        row["wiener_max_increment"] = float(np.mean(table[:, m + j]))
    score = trend_score([r["mean"] for r in diagnostics], [r["se"] for r in diagnostics])
    return CheckResult.judge(f"continuity[{f.name}]", score, SCORE_TOLERANCE, diagnostics=diagnostics)


def _ito_residuals(
    fun: ItoFunction,
    t: float,
    levels: Sequence[int],
    grid: TimeGrid,
    values: np.ndarray,
) -> np.ndarray:
    # untruncated: the identity holds for the raw integrand
    scheme = ApproximationScheme(t, tuple(levels), "none")
    integrand = markov_functional(f"d[{fun.name}]", fun.df, h2_claim=fun.h2_integrand)
    integrals = level_integrals(integrand, scheme, grid, values)
    w_t = values[:, grid.index_of(t)]
    start = fun.f(np.zeros_like(w_t))
    columns = []
    for j, level in enumerate(levels):
        knots = scheme.grid(level).knots
        w = values[:, grid.indices_of(knots[:-1])]
        time_integral = np.sum(fun.d2f(w) * np.diff(knots), axis=1)
        columns.append(fun.f(w_t) - start - integrals[:, j] - 0.5 * time_integral)
    return np.abs(np.column_stack(columns))


def check_ito_lemma(
    fun: ItoFunction,
    t: float,
    scheme: ApproximationScheme,
    ensemble: PathEnsemble,
    threshold: Optional[float] = None,
    pilot_level: Optional[int] = None,
    pilot_factor: float = 4.0,
    execution: Execution = DEFAULT_EXECUTION,
) -> CheckResult:
    """
    Residual of f(W_t) - f(0) = int f'(W) dW + 1/2 int f''(W) ds per level.

    Without an explicit threshold the final-level bound is `pilot_factor`
    times the mean |R| at `pilot_level`, which must be finer than the scheme.
    """
    _require_horizon(scheme, t)
    levels = list(scheme.levels)
    if threshold is None:
        if pilot_level is None or pilot_level <= levels[-1]:
            raise UsageError("A pilot threshold needs a pilot level finer than the scheme")
        levels.append(pilot_level)
    grid = ensemble.grid

    table = map_paths(ensemble, lambda values: _ito_residuals(fun, t, levels, grid, values), execution)
    rows = _level_columns(table, levels)
    if threshold is None:
        pilot = rows.pop()
        threshold = pilot_factor * pilot["mean"]
        logger.debug("ito-lemma[%s]: pilot level %d gives threshold %.4g", fun.name, pilot_level, threshold)
        pilot["role"] = "pilot"
    else:
        pilot = None
    for row in rows:
        row["role"] = "level"
    score = trend_score([r["mean"] for r in rows], [r["se"] for r in rows], threshold)
    diagnostics = rows + ([pilot] if pilot else [])
    for row in diagnostics:
        row["threshold"] = threshold
    return CheckResult.judge(f"ito-lemma[{fun.name}]", score, SCORE_TOLERANCE, diagnostics=diagnostics)


def check_l2_decay(
    f: IntegrandFunctional,
    t: float,
    scheme: ApproximationScheme,
    ensemble: PathEnsemble,
    quadrature_grid: TimeGrid,
    rule: QuadratureRule = "trapezoid",
    ratio_threshold: float = 0.05,
    execution: Execution = DEFAULT_EXECUTION,
) -> CheckResult:
    """
    Mean pathwise L2 error must fall level by level, and the final mean must
    be below `ratio_threshold` times the first.

    With the trapezoid rule, an integrand carrying a closed-form expected
    error must also match it within 3 standard errors at every level.
    """
    _require_horizon(scheme, t)
    grid = ensemble.grid

    def work(values: np.ndarray) -> np.ndarray:
        return np.column_stack([
            l2_error_batch(f, scheme, level, grid, values, quadrature_grid, rule) for level in scheme.levels
        ])

    table = map_paths(ensemble, work, execution)
    diagnostics = _level_columns(table, scheme.levels)
    # the closed form is the continuous-time error; only the trapezoid rule is unbiased for it
    judged = rule == "trapezoid" and all(math.isinf(scheme.bound(k, f)) for k in scheme.levels)
    for row in diagnostics:
        expected = f.l2_oracle(t, row["level"]) if f.l2_oracle is not None else None
        row["expected"] = expected
        row["z"] = _oracle_z(row["mean"], row["se"], expected) if expected is not None and judged else None
    threshold = ratio_threshold * diagnostics[0]["mean"]
    score = trend_score([r["mean"] for r in diagnostics], [r["se"] for r in diagnostics], threshold)
    z_values = [r["z"] for r in diagnostics if r["z"] is not None]
    if z_values:
        score = max(score, max(z_values) / Z_TOLERANCE)
    return CheckResult.judge(f"l2-decay[{f.name}]", score, SCORE_TOLERANCE, diagnostics=diagnostics)


def check_convergence(
    f: IntegrandFunctional,
    t: float,
    scheme: ApproximationScheme,
    ensemble: PathEnsemble,
    threshold: float = 0.02,
    eps_grid: Sequence[float] = DEFAULT_EPS_GRID,
    reference_level: Optional[int] = None,
    execution: Execution = DEFAULT_EXECUTION,
) -> CheckResult:
    """
    I(b_k)(t) must approach I(b_ref)(t) in probability at every scheme level.

    The reference level defaults to one above the finest scheme level and must
    be finer than it; the ensemble grid has to contain its knots.

    Raises:
        UsageError: If the scheme has a single level or the reference is not finer
        OffGridError: If the ensemble grid misses a reference knot
    """
    _require_horizon(scheme, t)
    levels = scheme.levels
    if len(levels) < 2:
        raise UsageError("Convergence needs at least two levels")
    if reference_level is None:
        reference_level = levels[-1] + 1
    if reference_level <= levels[-1]:
        raise UsageError(f"Reference level {reference_level} must be finer than the scheme's finest {levels[-1]}")
    extended = ApproximationScheme(t, levels + (reference_level,), scheme.truncation)
    grid = ensemble.grid

    table = map_paths(ensemble, lambda values: level_integrals(f, extended, grid, values), execution)
    diffs = [table[:, j] - table[:, -1] for j in range(len(levels))]
    report = build_report(levels, diffs, threshold, eps_grid)
    diagnostics = [
        {"level": row.level, "reference_level": reference_level, "ky_fan": row.ky_fan, "ky_fan_se": row.ky_fan_se}
        for row in report.rows
    ]
    return CheckResult.judge(
        f"convergence[{f.name}]", report.score, SCORE_TOLERANCE,
        diagnostics=diagnostics, report=report, trace=_trace(t, extended.levels, table[0]),
    )


def check_quadratic_variation(
    t: float,
    scheme: ApproximationScheme,
    ensemble: PathEnsemble,
    execution: Execution = DEFAULT_EXECUTION,
) -> CheckResult:
    """Sum of squared increments of W on each level grid against t."""
    _require_horizon(scheme, t)
    grid = ensemble.grid

    def work(values: np.ndarray) -> np.ndarray:
        columns = []
        for level in scheme.levels:
            w = values[:, grid.indices_of(scheme.grid(level).knots)]
            columns.append(np.sum(np.square(np.diff(w, axis=1)), axis=1))
        return np.column_stack(columns)

    table = map_paths(ensemble, work, execution)
    diagnostics = []
    for j, level in enumerate(scheme.levels):
        steps = np.diff(scheme.grid(level).knots)
        # exact variance of sum (dW)^2 is 2 sum dt^2
        se = math.sqrt(2.0 * float(np.sum(np.square(steps))) / table.shape[0])
        mean = float(np.mean(table[:, j]))
        diagnostics.append({"level": level, "mean": mean, "se": se, "expected": t, "z": _z_score(mean - t, se)})
    statistic = max(row["z"] for row in diagnostics)
    return CheckResult.judge("quadratic-variation", statistic, Z_TOLERANCE, diagnostics=diagnostics)


def check_adaptedness(
    f: IntegrandFunctional,
    s: float,
    scheme: ApproximationScheme,
    ensemble: PathEnsemble,
    perturbations: int = 4,
    probe_paths: int = 8,
) -> CheckResult:
    """
    I(b_k)(s) at the finest level must not change, bit for bit, when the path
    after s is resampled; the integrand itself is probed at s as well.

    The statistic counts mismatching evaluations.
    """
    t = scheme.horizon
    if not 0.0 < s < t:
        raise UsageError(f"Probe time must lie in (0, {t}), got {s}")
    if perturbations < 1 or probe_paths < 1:
        raise UsageError("perturbations and probe_paths must be positive")
    level = scheme.levels[-1]
    s_level = scheme.grid(level).index_of(s)
    grid = ensemble.grid

    diagnostics = []
    for i in range(min(probe_paths, ensemble.count)):
        path = ensemble.path(i)
        first_index = i * perturbations
        candidates = [path] + perturbed_paths(path, s, perturbations, ensemble.master_seed, first_index)
        probe = probe_adaptedness(f, s, path, perturbations, ensemble.master_seed, first_index)
        row = {"path_index": i, "integrand_adapted": probe.passed, "violation": probe.violation}
        try:
            values = np.stack([c.values for c in candidates])
            at_s = level_integral_paths(f, scheme, level, grid, values)[:, s_level]
        except PrefixReadError as e:
            row.update(integral_at_s=math.nan, integral_mismatches=perturbations, max_abs_change=math.nan)
            row["violation"] = row["violation"] or str(e)
        else:
            reference = at_s[0].tobytes()
            row.update(
                integral_at_s=float(at_s[0]),
                integral_mismatches=int(sum(v.tobytes() != reference for v in at_s[1:])),
                max_abs_change=float(np.max(np.abs(at_s[1:] - at_s[0]))),
            )
        diagnostics.append(row)
    statistic = sum(row["integral_mismatches"] + (0 if row["integrand_adapted"] else 1) for row in diagnostics)
    return CheckResult.judge(f"adaptedness[{f.name}]", statistic, 0.0, diagnostics=diagnostics)
