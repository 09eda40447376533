"""
Experiment runner: binds a validated configuration to the verification checks.

All checks share one ensemble, sampled on the coarsest dyadic grid over
[0, horizon] and bridge-refined onto whatever grids a check needs, so every
check sees the same sample points.
"""

import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Dict, List, Optional

from .approximation import ApproximationScheme, Truncation
from .errors import InapplicableCheckError
from .export import append_summary, save_check, start_summary, write_manifest
from .library import get_ito_function
from .schemas import ExperimentConfig
from .verification import (
    CheckResult,
    Execution,
    check_adaptedness,
    check_continuity,
    check_convergence,
    check_isometry,
    check_ito_lemma,
    check_l2_decay,
    check_martingale,
    check_quadratic_variation,
    check_uniqueness,
)
from .wiener import PathEnsemble, TimeGrid

logger = logging.getLogger(__name__)


@dataclass
class RunOutcome:
    """Results of one run and where they were written."""

    results: List[CheckResult] = field(default_factory=list)
    output_dir: Optional[Path] = None

    @property
    def passed(self) -> bool:
        return all(result.passed for result in self.results)

    @property
    def exit_code(self) -> int:
        return 0 if self.passed else 1


class ExperimentRunner:
    """Runs the enabled checks of one configuration."""

    def __init__(self, config: ExperimentConfig):
        self.config = config
        base_grid = TimeGrid.dyadic(config.levels.k_min, config.horizon)
        self.base = PathEnsemble(config.master_seed, base_grid, config.paths)
        self.execution = Execution(chunk_size=config.chunk_size, workers=config.workers)

    def ensemble_for(self, *grids: TimeGrid) -> PathEnsemble:
        """The shared sample observed on the union of the given grids."""
        return self.base.refined(TimeGrid.union(self.base.grid, *grids))

    def scheme(self, t: float, truncation: Truncation = "auto", level_shift: int = 0) -> ApproximationScheme:
        levels = self.config.levels
        return ApproximationScheme.dyadic(t, levels.k_min, levels.k_max, truncation, level_shift)

    def _uniqueness(self) -> List[CheckResult]:
        settings = self.config.checks.uniqueness
        t = self.config.time_of("uniqueness")
        scheme_a = self.scheme(t, settings.truncation_a)
        scheme_b = self.scheme(t, settings.truncation_b, settings.level_shift)
        ensemble = self.ensemble_for(scheme_a.finest_grid, scheme_b.finest_grid)
        return [
            check_uniqueness(
                spec.build(), t, scheme_a, scheme_b, ensemble,
                threshold=settings.threshold, eps_grid=self.config.eps_grid, execution=self.execution,
            )
            for spec in self.config.integrands_of("uniqueness")
        ]

    def _isometry(self) -> List[CheckResult]:
        settings = self.config.checks.isometry
        t = self.config.time_of("isometry")
        level = settings.level or self.config.levels.k_max
        ensemble = self.ensemble_for(TimeGrid.dyadic(level, t))
        results = []
        for spec in self.config.integrands_of("isometry"):
            try:
                results.append(check_isometry(
                    spec.build(), t, level, ensemble, settings.truncation, execution=self.execution,
                ))
            except InapplicableCheckError as e:
                logger.warning("Skipping isometry: %s", e)
        return results

    def _martingale(self) -> List[CheckResult]:
        settings = self.config.checks.martingale
        t = self.config.time_of("martingale")
        s = settings.s if settings.s is not None else t / 2.0
        level = settings.level or self.config.levels.k_max
        ensemble = self.ensemble_for(TimeGrid.dyadic(level, t))
        tests = [g.build() for g in settings.test_functionals]
        return [
            check_martingale(spec.build(), s, t, tests, ensemble, level=level, execution=self.execution)
            for spec in self.config.integrands_of("martingale")
        ]

    def _continuity(self) -> List[CheckResult]:
        t = self.config.time_of("continuity")
        scheme = self.scheme(t)
        ensemble = self.ensemble_for(scheme.finest_grid)
        return [
            check_continuity(spec.build(), t, scheme, ensemble, execution=self.execution)
            for spec in self.config.integrands_of("continuity")
        ]

    def _ito_lemma(self) -> List[CheckResult]:
        settings = self.config.checks.ito_lemma
        t = self.config.time_of("ito-lemma")
        scheme = self.scheme(t, "none")
        if settings.threshold == "pilot":
            threshold = None
            pilot_level = settings.pilot_level or self.config.levels.k_max + 2
            ensemble = self.ensemble_for(TimeGrid.dyadic(max(pilot_level, scheme.levels[-1]), t))
        else:
            threshold = float(settings.threshold)
            pilot_level = None
            ensemble = self.ensemble_for(scheme.finest_grid)
        return [
            check_ito_lemma(
                get_ito_function(name), t, scheme, ensemble,
                threshold=threshold, pilot_level=pilot_level,
                pilot_factor=settings.pilot_factor, execution=self.execution,
            )
            for name in settings.functions
        ]

    def _l2_decay(self) -> List[CheckResult]:
        settings = self.config.checks.l2_decay
        t = self.config.time_of("l2-decay")
        scheme = self.scheme(t)
        quadrature_level = settings.quadrature_level or self.config.levels.k_max + 2
        quadrature_grid = TimeGrid.dyadic(max(quadrature_level, scheme.levels[-1]), t)
        ensemble = self.ensemble_for(quadrature_grid)
        return [
            check_l2_decay(
                spec.build(), t, scheme, ensemble, quadrature_grid,
                rule=settings.rule, ratio_threshold=settings.ratio_threshold, execution=self.execution,
            )
            for spec in self.config.integrands_of("l2-decay")
        ]

    def _convergence(self) -> List[CheckResult]:
        settings = self.config.checks.convergence
        t = self.config.time_of("convergence")
        scheme = self.scheme(t)
        reference_level = settings.reference_level or self.config.levels.k_max + 1
        ensemble = self.ensemble_for(TimeGrid.dyadic(reference_level, t))
        return [
            check_convergence(
                spec.build(), t, scheme, ensemble,
                threshold=settings.threshold, eps_grid=self.config.eps_grid,
                reference_level=reference_level, execution=self.execution,
            )
            for spec in self.config.integrands_of("convergence")
        ]

    def _quadratic_variation(self) -> List[CheckResult]:
        t = self.config.time_of("quadratic-variation")
        scheme = self.scheme(t)
        return [check_quadratic_variation(t, scheme, self.ensemble_for(scheme.finest_grid), self.execution)]

    def _adaptedness(self) -> List[CheckResult]:
        settings = self.config.checks.adaptedness
        t = self.config.time_of("adaptedness")
        s = settings.s if settings.s is not None else t / 2.0
        scheme = self.scheme(t)
        ensemble = self.ensemble_for(scheme.finest_grid)
        return [
            check_adaptedness(
                spec.build(), s, scheme, ensemble,
                perturbations=settings.perturbations, probe_paths=settings.probe_paths,
            )
            for spec in self.config.integrands_of("adaptedness")
        ]

    def checks(self) -> Dict[str, Callable[[], List[CheckResult]]]:
        return {
            "uniqueness": self._uniqueness,
            "isometry": self._isometry,
            "martingale": self._martingale,
            "continuity": self._continuity,
            "ito-lemma": self._ito_lemma,
            "l2-decay": self._l2_decay,
            "convergence": self._convergence,
            "quadratic-variation": self._quadratic_variation,
            "adaptedness": self._adaptedness,
        }

    def run_check(self, name: str) -> List[CheckResult]:
        logger.info("Running %s on %d paths", name, self.config.paths)
        return self.checks()[name]()


def run(
    config: ExperimentConfig,
    on_result: Optional[Callable[[CheckResult], None]] = None,
) -> RunOutcome:
    """
    Run every enabled check and write its tables, the summary and the manifest.

    Args:
        config: Validated configuration
        on_result: Called once per finished check

    Returns:
        RunOutcome; exit_code is 0 iff every check passed
    """
    output_dir = Path(config.output_dir)
    runner = ExperimentRunner(config)
    outcome = RunOutcome(output_dir=output_dir)

    start_summary(output_dir)
    for name in config.enabled_checks():
        for result in runner.run_check(name):
            save_check(result, output_dir)
            append_summary(result, output_dir)
            outcome.results.append(result)
            if on_result is not None:
                on_result(result)
    write_manifest(config, outcome.results, output_dir)
    return outcome
