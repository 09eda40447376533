"""
Numerical evidence for convergence in probability.

For a sample of differences X_n - X the module estimates exceedance
probabilities P(|X_n - X| > eps) and the Ky Fan distance
inf{eps >= 0 : P(|X_n - X| > eps) <= eps}, and judges whether a sequence of
levels trends to zero within Monte Carlo noise.
"""

import logging
import math
from typing import List, Optional, Sequence

import numpy as np
import pandas as pd
from pydantic import BaseModel, Field

from .errors import UsageError

logger = logging.getLogger(__name__)

DEFAULT_EPS_GRID = (1e-3, 1e-2, 1e-1, 1.0)

# consecutive levels may rise by this many combined standard errors
TREND_SLACK_SE = 2.0


class MonteCarloEstimate(BaseModel):
    """A sample mean with its standard error."""

    value: float = Field(..., description="Point estimate")
    std_error: float = Field(..., ge=0.0, description="Standard error of the estimate")
    sample_count: int = Field(..., ge=1, description="Number of samples")


def _as_sample(values: Sequence[float]) -> np.ndarray:
    sample = np.asarray(values, dtype=np.float64).ravel()
    if sample.size == 0:
        raise UsageError("Need at least one sample")
    return sample


def mean_estimate(values: Sequence[float]) -> MonteCarloEstimate:
    """Sample mean with std / sqrt(N) standard error."""
    sample = _as_sample(values)
    std = float(np.std(sample, ddof=1)) if sample.size > 1 else 0.0
    return MonteCarloEstimate(
        value=float(np.mean(sample)),
        std_error=std / math.sqrt(sample.size),
        sample_count=int(sample.size),
    )


def exceedance_prob(diffs: Sequence[float], eps: float) -> MonteCarloEstimate:
    """
    Estimate P(|D| > eps) with its binomial standard error.

    Raises:
        UsageError: If diffs is empty or eps is not positive
    """
    sample = _as_sample(diffs)
    if not eps > 0.0:
        raise UsageError(f"eps must be positive, got {eps}")
    p_hat = float(np.count_nonzero(np.abs(sample) > eps)) / sample.size
    return MonteCarloEstimate(
        value=p_hat,
        std_error=math.sqrt(p_hat * (1.0 - p_hat) / sample.size),
        sample_count=int(sample.size),
    )


def ky_fan(diffs: Sequence[float]) -> float:
    """
    Empirical Ky Fan distance of a sample of differences from zero.

    Scans the sorted |d|: on [a_(N-k), a_(N-k+1)) exactly k of N values exceed
    eps, so the smallest admissible eps there is max(a_(N-k), k/N).

    Raises:
        UsageError: If diffs is empty
    """
    a = np.sort(np.abs(_as_sample(diffs)))
    n = a.size
    k = np.arange(n + 1)
    # interval where exactly k values exceed eps: [lower, upper)
    lower = np.concatenate([[0.0], a])[n - k]
    upper = np.concatenate([a, [np.inf]])[n - k]
    candidate = np.maximum(lower, k / n)
    valid = candidate < upper
    return float(np.min(candidate[valid]))


def ky_fan_std_error(value: float, sample_count: int) -> float:
    """Binomial standard error of the exceedance probability at the Ky Fan point."""
    p = min(max(value, 0.0), 1.0)
    return math.sqrt(p * (1.0 - p) / sample_count)


class Exceedance(BaseModel):
    """P(|D| > eps) at one eps."""

    eps: float = Field(..., gt=0.0, description="Threshold")
    p_hat: float = Field(..., ge=0.0, le=1.0, description="Estimated exceedance probability")
    se: float = Field(..., ge=0.0, description="Binomial standard error")


class ConvergenceRow(BaseModel):
    """Convergence evidence for one level."""

    level: int = Field(..., description="Level index")
    exceedances: List[Exceedance] = Field(..., description="Exceedance estimates over the eps grid")
    ky_fan: float = Field(..., ge=0.0, description="Empirical Ky Fan distance")
    ky_fan_se: float = Field(0.0, ge=0.0, description="Standard error of the Ky Fan estimate")
    sample_count: int = Field(..., ge=1, description="Number of paths")


class ConvergenceReport(BaseModel):
    """Per-level rows plus the overall verdict."""

    rows: List[ConvergenceRow] = Field(..., description="Rows ordered coarse to fine")
    threshold: float = Field(..., ge=0.0, description="Required bound on the final Ky Fan distance")
    score: float = Field(..., description="Worst normalized violation; at most 1 passes")
    passed: bool = Field(..., description="Verdict")
    note: str = Field(
        "finite-sample evidence for convergence in probability, not a proof",
        description="How to read the verdict",
    )

    def to_frame(self) -> pd.DataFrame:
        records = [
            {"level": row.level, "eps": e.eps, "p_hat": e.p_hat, "se": e.se, "ky_fan": row.ky_fan}
            for row in self.rows
            for e in row.exceedances
        ]
        return pd.DataFrame(records, columns=["level", "eps", "p_hat", "se", "ky_fan"])


def convergence_row(level: int, diffs: Sequence[float], eps_grid: Sequence[float] = DEFAULT_EPS_GRID) -> ConvergenceRow:
    sample = _as_sample(diffs)
    exceedances = []
    for eps in eps_grid:
        estimate = exceedance_prob(sample, eps)
        exceedances.append(Exceedance(eps=eps, p_hat=estimate.value, se=estimate.std_error))
    value = ky_fan(sample)
    return ConvergenceRow(
        level=level,
        exceedances=exceedances,
        ky_fan=value,
        ky_fan_se=ky_fan_std_error(value, sample.size),
        sample_count=int(sample.size),
    )


def _ratio(excess: float, scale: float) -> float:
    if scale > 0.0:
        return excess / scale
    return 0.0 if excess <= 0.0 else math.inf


def trend_score(
    values: Sequence[float],
    std_errors: Sequence[float],
    threshold: Optional[float] = None,
    slack: float = TREND_SLACK_SE,
) -> float:
    """
    Worst normalized violation of a downward trend.

    Each rise between consecutive levels is divided by `slack` combined
    standard errors; the final value is divided by the threshold. The sequence
    passes when the score is at most 1.
    """
    values = [float(v) for v in values]
    std_errors = [float(s) for s in std_errors]
    if any(math.isnan(v) for v in values):
        return math.inf
    score = 0.0
    for i in range(len(values) - 1):
        combined = math.sqrt(std_errors[i] ** 2 + std_errors[i + 1] ** 2)
        score = max(score, _ratio(values[i + 1] - values[i], slack * combined))
    if threshold is not None:
        score = max(score, _ratio(values[-1], threshold))
    return score


def assess(rows: Sequence[ConvergenceRow], threshold: float) -> bool:
    """
    Pass iff Ky Fan distances do not rise beyond 2 combined standard errors
    and the last one is below the threshold.

    Raises:
        UsageError: If fewer than two levels are given
    """
    if len(rows) < 2:
        raise UsageError(f"Assessment needs at least two levels, got {len(rows)}")
    score = trend_score([r.ky_fan for r in rows], [r.ky_fan_se for r in rows], threshold)
    return score <= 1.0


def build_report(
    levels: Sequence[int],
    diffs_by_level: Sequence[Sequence[float]],
    threshold: float,
    eps_grid: Sequence[float] = DEFAULT_EPS_GRID,
) -> ConvergenceReport:
    """Rows for every level plus the verdict of `assess`."""
    if len(levels) != len(diffs_by_level):
        raise UsageError("One sample of differences is needed per level")
    rows = [convergence_row(level, diffs, eps_grid) for level, diffs in zip(levels, diffs_by_level)]
    passed = assess(rows, threshold)
    score = trend_score([r.ky_fan for r in rows], [r.ky_fan_se for r in rows], threshold)
    for row in rows:
        logger.debug("level %d: ky_fan=%.4g (se %.2g)", row.level, row.ky_fan, row.ky_fan_se)
    return ConvergenceReport(rows=rows, threshold=threshold, score=score, passed=passed)
