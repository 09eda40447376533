"""
Experiment configuration models using Pydantic.

An experiment is one YAML file: the shared ensemble (seed, horizon, paths,
level range), a default integrand, and one settings block per check.
"""

import os
from typing import Any, Dict, List, Literal, Mapping, Optional, Union

import yaml
from pydantic import BaseModel, Field, PositiveFloat, ValidationError, field_validator, model_validator

from .convergence import DEFAULT_EPS_GRID
from .errors import ConfigError
from .library import INTEGRANDS, ITO_FUNCTIONS, build_integrand
from .process import IntegrandFunctional
from .rng import parse_seed
from .wiener import TimeGrid

TruncationSetting = Union[Literal["auto", "none"], PositiveFloat]

CHECK_NAMES = (
    "uniqueness",
    "isometry",
    "martingale",
    "continuity",
    "ito-lemma",
    "l2-decay",
    "convergence",
    "quadratic-variation",
    "adaptedness",
)

# checks that judge a trend across levels
MULTI_LEVEL_CHECKS = ("uniqueness", "continuity", "ito-lemma", "convergence")


def check_field(name: str) -> str:
    """Config attribute for a check name (`ito-lemma` -> `ito_lemma`)."""
    return name.replace("-", "_")


class IntegrandSpec(BaseModel):
    """A built-in integrand selected by name."""

    kind: str = Field("wiener", description="Catalog name")
    params: Dict[str, float] = Field(default_factory=dict, description="Keyword parameters")

    @field_validator("kind")
    @classmethod
    def _known_kind(cls, value: str) -> str:
        if value not in INTEGRANDS:
            raise ValueError(f"unknown integrand '{value}', available: {sorted(INTEGRANDS)}")
        return value

    @model_validator(mode="after")
    def _known_params(self) -> "IntegrandSpec":
        unknown = set(self.params) - set(INTEGRANDS[self.kind].parameters)
        if unknown:
            raise ValueError(f"unknown parameters for '{self.kind}': {sorted(unknown)}")
        return self

    def build(self) -> IntegrandFunctional:
        return build_integrand(self.kind, self.params)


class LevelRange(BaseModel):
    """Dyadic levels k_min..k_max."""

    k_min: int = Field(4, ge=1, description="Coarsest level")
    k_max: int = Field(12, ge=1, description="Finest level")

    @model_validator(mode="after")
    def _ordered(self) -> "LevelRange":
        if self.k_max < self.k_min:
            raise ValueError(f"k_max ({self.k_max}) must be >= k_min ({self.k_min})")
        return self

    @classmethod
    def parse(cls, text: str) -> "LevelRange":
        """Parse `kmin:kmax`."""
        try:
            low, high = text.split(":")
            return cls(k_min=int(low), k_max=int(high))
        except ValueError as e:
            raise ConfigError(f"Invalid level range '{text}' (expected kmin:kmax): {e}")


class CheckSettings(BaseModel):
    """Fields shared by every check."""

    enabled: bool = Field(True, description="Run this check")
    time: Optional[PositiveFloat] = Field(None, description="Evaluation time; defaults to the horizon")
    integrands: Optional[List[IntegrandSpec]] = Field(
        None, description="Integrands to check; defaults to the experiment integrand"
    )


class UniquenessSettings(CheckSettings):
    truncation_a: TruncationSetting = Field("auto", description="Truncation of scheme A")
    truncation_b: TruncationSetting = Field("auto", description="Truncation of scheme B")
    level_shift: int = Field(1, ge=0, description="Scheme B runs on levels shifted by this amount")
    threshold: PositiveFloat = Field(0.05, description="Bound on the final Ky Fan distance")


class IsometrySettings(CheckSettings):
    level: Optional[int] = Field(None, ge=1, description="Level; defaults to k_max")
    truncation: TruncationSetting = Field("auto", description="Truncation schedule")


class MartingaleSettings(CheckSettings):
    s: Optional[PositiveFloat] = Field(None, description="Earlier time; defaults to half the evaluation time")
    level: Optional[int] = Field(None, ge=1, description="Level; defaults to k_max")
    test_functionals: List[IntegrandSpec] = Field(
        default_factory=lambda: [
            IntegrandSpec(kind="const"),
            IntegrandSpec(kind="wiener"),
            IntegrandSpec(kind="sin-of-w"),
        ],
        description="Functionals g read at s",
    )


class ContinuitySettings(CheckSettings):
    pass


class ItoLemmaSettings(CheckSettings):
    functions: List[str] = Field(["identity", "square", "exp"], description="Ito function catalog names")
    threshold: Union[Literal["pilot"], PositiveFloat] = Field(
        "pilot", description="Final-level bound on mean |R|, or 'pilot'"
    )
    pilot_level: Optional[int] = Field(None, ge=1, description="Pilot level; defaults to k_max + 2")
    pilot_factor: PositiveFloat = Field(4.0, description="Threshold = factor x pilot mean |R|")

    @field_validator("functions")
    @classmethod
    def _known_functions(cls, value: List[str]) -> List[str]:
        unknown = [name for name in value if name not in ITO_FUNCTIONS]
        if unknown:
            raise ValueError(f"unknown Ito functions {unknown}, available: {sorted(ITO_FUNCTIONS)}")
        return value


class L2DecaySettings(CheckSettings):
    rule: Literal["left", "trapezoid"] = Field("trapezoid", description="Quadrature rule")
    quadrature_level: Optional[int] = Field(None, ge=1, description="Quadrature level; defaults to k_max + 2")
    ratio_threshold: PositiveFloat = Field(0.05, description="Bound on final / first mean error")


class ConvergenceSettings(CheckSettings):
    threshold: PositiveFloat = Field(0.02, description="Bound on the final Ky Fan distance")
    reference_level: Optional[int] = Field(
        None, ge=1, description="Level every scheme level is compared with; defaults to k_max + 1"
    )


class QuadraticVariationSettings(CheckSettings):
    pass


class AdaptednessSettings(CheckSettings):
    s: Optional[PositiveFloat] = Field(None, description="Probe time; defaults to half the evaluation time")
    perturbations: int = Field(4, ge=1, description="Resampled continuations per path")
    probe_paths: int = Field(8, ge=1, description="Paths probed")


class ChecksConfig(BaseModel):
    """Settings for every check."""

    uniqueness: UniquenessSettings = Field(default_factory=UniquenessSettings)
    isometry: IsometrySettings = Field(default_factory=IsometrySettings)
    martingale: MartingaleSettings = Field(default_factory=MartingaleSettings)
    continuity: ContinuitySettings = Field(default_factory=ContinuitySettings)
    ito_lemma: ItoLemmaSettings = Field(default_factory=ItoLemmaSettings)
    l2_decay: L2DecaySettings = Field(default_factory=L2DecaySettings)
    convergence: ConvergenceSettings = Field(default_factory=ConvergenceSettings)
    quadratic_variation: QuadraticVariationSettings = Field(default_factory=QuadraticVariationSettings)
    adaptedness: AdaptednessSettings = Field(default_factory=AdaptednessSettings)

    def settings(self, name: str) -> CheckSettings:
        return getattr(self, check_field(name))


class ExperimentConfig(BaseModel):
    """Complete experiment configuration."""

    master_seed: int = Field(0, description="Master seed, u64 (decimal or 0x hex in YAML)")
    horizon: PositiveFloat = Field(1.0, description="Ensemble horizon T")
    paths: int = Field(1000, ge=2, description="Ensemble size N")
    levels: LevelRange = Field(default_factory=LevelRange, description="Dyadic level range")
    integrand: IntegrandSpec = Field(default_factory=IntegrandSpec, description="Default integrand")
    eps_grid: List[PositiveFloat] = Field(list(DEFAULT_EPS_GRID), description="Exceedance thresholds")
    chunk_size: int = Field(500, ge=1, description="Paths per work unit")
    workers: int = Field(1, ge=1, description="Worker threads")
    output_dir: str = Field("output", description="Directory for CSVs and the manifest")
    checks: ChecksConfig = Field(default_factory=ChecksConfig, description="Per-check settings")

    @field_validator("master_seed", mode="before")
    @classmethod
    def _parse_seed(cls, value: Any) -> int:
        return parse_seed(value)

    @model_validator(mode="after")
    def _check_times(self) -> "ExperimentConfig":
        for name in CHECK_NAMES:
            settings = self.checks.settings(name)
            t = self.time_of(name)
            if t > self.horizon * (1.0 + 1e-12):
                raise ValueError(f"{name}: time {t} exceeds the horizon {self.horizon}")
            s = getattr(settings, "s", None)
            if s is not None and s >= t:
                raise ValueError(f"{name}: s ({s}) must precede the evaluation time ({t})")
        return self

    @model_validator(mode="after")
    def _check_levels(self) -> "ExperimentConfig":
        k_min, k_max = self.levels.k_min, self.levels.k_max
        for name in MULTI_LEVEL_CHECKS:
            if self.checks.settings(name).enabled and k_max == k_min:
                raise ValueError(f"{name}: needs at least two levels, got k_min = k_max = {k_min}")

        finer = [
            ("convergence.reference_level", self.checks.convergence.enabled, self.checks.convergence.reference_level),
            ("ito_lemma.pilot_level", self.checks.ito_lemma.enabled, self.checks.ito_lemma.pilot_level),
        ]
        for label, enabled, level in finer:
            if enabled and level is not None and level <= k_max:
                raise ValueError(f"{label} ({level}) must be finer than k_max ({k_max})")

        martingale = self.checks.martingale
        if martingale.enabled and martingale.s is not None:
            self._require_knot("martingale", martingale.s, martingale.level or k_max)
        adaptedness = self.checks.adaptedness
        if adaptedness.enabled and adaptedness.s is not None:
            self._require_knot("adaptedness", adaptedness.s, k_max)
        return self

    def _require_knot(self, name: str, s: float, level: int) -> None:
        t = self.time_of(name)
        if not TimeGrid.dyadic(level, t).contains([s]):
            raise ValueError(f"{name}: s ({s}) is not a knot of the level-{level} grid on [0, {t}]")

    def time_of(self, name: str) -> float:
        settings = self.checks.settings(name)
        return float(settings.time) if settings.time is not None else float(self.horizon)

    def integrands_of(self, name: str) -> List[IntegrandSpec]:
        settings = self.checks.settings(name)
        return list(settings.integrands) if settings.integrands else [self.integrand]

    def enabled_checks(self) -> List[str]:
        return [name for name in CHECK_NAMES if self.checks.settings(name).enabled]

    def override(self, updates: Mapping[str, Any]) -> "ExperimentConfig":
        """
        Copy with top-level keys replaced, re-validated.

        Raises:
            ConfigError: If the result is invalid
        """
        data = self.model_dump()
        data.update(updates)
        try:
            return ExperimentConfig.model_validate(data)
        except ValidationError as e:
            raise ConfigError(f"Invalid configuration override: {e}")

    def select_checks(self, names: List[str]) -> "ExperimentConfig":
        """Copy with exactly the named checks enabled."""
        unknown = [name for name in names if name not in CHECK_NAMES]
        if unknown:
            raise ConfigError(f"Unknown checks {unknown}, available: {list(CHECK_NAMES)}")
        checks = self.checks.model_dump()
        for name in CHECK_NAMES:
            checks[check_field(name)]["enabled"] = name in names
        return self.override({"checks": checks})

    @classmethod
    def from_yaml(cls, yaml_path: str) -> "ExperimentConfig":
        """Load configuration from YAML file."""
        with open(yaml_path, "r") as f:
            data = yaml.safe_load(f)
        return cls(**(data or {}))


def load_config(config_path: str) -> ExperimentConfig:
    """
    Load an experiment configuration from a YAML file.

    Args:
        config_path: Path to the configuration file

    Returns:
        ExperimentConfig object

    Raises:
        FileNotFoundError: If the configuration file doesn't exist
        ConfigError: If the configuration is invalid
    """
    if not os.path.exists(config_path):
        raise FileNotFoundError(f"Configuration file not found: {config_path}")
    try:
        return ExperimentConfig.from_yaml(config_path)
    except (yaml.YAMLError, ValidationError, TypeError) as e:
        raise ConfigError(f"Invalid configuration: {e}")
