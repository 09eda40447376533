"""Tests for experiment configuration loading and validation."""

import pytest
import yaml

from itoint.errors import ConfigError
from itoint.schemas import CHECK_NAMES, ExperimentConfig, LevelRange, load_config


def _write(tmp_path, data):
    path = tmp_path / "config.yaml"
    path.write_text(yaml.safe_dump(data))
    return str(path)


class TestLoadConfig:
    def test_defaults(self, tmp_path):
        config = load_config(_write(tmp_path, {}))
        assert config.paths == 1000
        assert config.levels.k_min == 4 and config.levels.k_max == 12
        assert config.enabled_checks() == list(CHECK_NAMES)

    def test_hex_seed(self, tmp_path):
        config = load_config(_write(tmp_path, {"master_seed": "0xff"}))
        assert config.master_seed == 255

    def test_missing_file(self, tmp_path):
        with pytest.raises(FileNotFoundError):
            load_config(str(tmp_path / "missing.yaml"))

    @pytest.mark.parametrize(
        "data",
        [
            {"levels": {"k_min": 5, "k_max": 4}},
            {"levels": {"k_min": 0, "k_max": 4}},
            {"paths": 1},
            {"horizon": 0.0},
            {"master_seed": "not-a-seed"},
            {"integrand": {"kind": "brownian-sheet"}},
            {"integrand": {"kind": "wiener", "params": {"scale": 1.0}}},
            {"checks": {"martingale": {"s": 1.0}}},
            {"checks": {"ito_lemma": {"functions": ["cube"]}}},
            {"checks": {"uniqueness": {"truncation_a": "sometimes"}}},
        ],
    )
    def test_invalid_configs(self, tmp_path, data):
        with pytest.raises(ConfigError):
            load_config(_write(tmp_path, data))

    def test_unparsable_yaml(self, tmp_path):
        path = tmp_path / "broken.yaml"
        path.write_text("levels: [unclosed")
        with pytest.raises(ConfigError):
            load_config(str(path))

    def test_shipped_configs_load(self):
        from pathlib import Path

        root = Path(__file__).resolve().parent.parent / "config"
        for name in ("experiment_config.yaml", "smoke_config.yaml"):
            assert load_config(str(root / name)).paths >= 2

    def test_shipped_experiment_reads_ito_formula_at_half(self):
        from pathlib import Path

        path = Path(__file__).resolve().parent.parent / "config" / "experiment_config.yaml"
        config = load_config(str(path))
        assert config.time_of("ito-lemma") == 0.5
        assert config.checks.convergence.reference_level is None


class TestOverrides:
    def test_override_revalidates(self):
        config = ExperimentConfig()
        assert config.override({"paths": 50}).paths == 50
        with pytest.raises(ConfigError):
            config.override({"levels": {"k_min": 6, "k_max": 2}})

    def test_select_checks(self):
        config = ExperimentConfig().select_checks(["isometry", "ito-lemma"])
        assert config.enabled_checks() == ["isometry", "ito-lemma"]
        with pytest.raises(ConfigError, match="Unknown checks"):
            ExperimentConfig().select_checks(["telepathy"])

    def test_level_range_parse(self):
        assert LevelRange.parse("3:7") == LevelRange(k_min=3, k_max=7)
        with pytest.raises(ConfigError):
            LevelRange.parse("7")

    def test_check_times_default_to_horizon(self):
        config = ExperimentConfig(horizon=2.0, checks={"isometry": {"time": 0.5}})
        assert config.time_of("isometry") == 0.5
        assert config.time_of("continuity") == 2.0
        assert [spec.kind for spec in config.integrands_of("continuity")] == ["wiener"]


MULTI_LEVEL_FIELDS = ("uniqueness", "continuity", "ito_lemma", "convergence")


class TestLevelRequirements:
    @pytest.mark.parametrize("name", MULTI_LEVEL_FIELDS)
    def test_single_level_rejected_for_trend_checks(self, tmp_path, name):
        checks = {field: {"enabled": field == name} for field in MULTI_LEVEL_FIELDS}
        data = {"levels": {"k_min": 5, "k_max": 5}, "checks": checks}
        with pytest.raises(ConfigError, match="at least two levels"):
            load_config(_write(tmp_path, data))

    def test_single_level_allowed_without_trend_checks(self, tmp_path):
        checks = {field: {"enabled": False} for field in MULTI_LEVEL_FIELDS}
        config = load_config(_write(tmp_path, {"levels": {"k_min": 5, "k_max": 5}, "checks": checks}))
        assert "convergence" not in config.enabled_checks()
        assert "isometry" in config.enabled_checks()

    def test_two_levels_enough_for_convergence(self):
        config = ExperimentConfig(levels={"k_min": 4, "k_max": 5}).select_checks(["convergence"])
        assert config.enabled_checks() == ["convergence"]

    @pytest.mark.parametrize(
        "checks",
        [
            {"convergence": {"reference_level": 12}},
            {"convergence": {"reference_level": 7}},
            {"ito_lemma": {"pilot_level": 12}},
        ],
    )
    def test_reference_levels_must_be_finer_than_k_max(self, tmp_path, checks):
        with pytest.raises(ConfigError, match="finer than k_max"):
            load_config(_write(tmp_path, {"checks": checks}))

    def test_reference_level_ignored_when_disabled(self):
        config = ExperimentConfig(checks={"convergence": {"enabled": False, "reference_level": 3}})
        assert config.checks.convergence.reference_level == 3

    @pytest.mark.parametrize("name", ["martingale", "adaptedness"])
    def test_off_knot_s_rejected(self, tmp_path, name):
        with pytest.raises(ConfigError, match="not a knot"):
            load_config(_write(tmp_path, {"checks": {name: {"s": 0.3}}}))

    def test_martingale_s_checked_on_its_own_level(self, tmp_path):
        checks = {"martingale": {"s": 0.25, "level": 1}}
        with pytest.raises(ConfigError, match="level-1 grid"):
            load_config(_write(tmp_path, {"checks": checks}))
        checks = {"martingale": {"s": 0.25, "level": 2}}
        assert load_config(_write(tmp_path, {"checks": checks})).checks.martingale.s == 0.25

    def test_knot_s_follows_check_time(self):
        config = ExperimentConfig(checks={"adaptedness": {"time": 0.5, "s": 0.125}})
        assert config.checks.adaptedness.s == 0.125
