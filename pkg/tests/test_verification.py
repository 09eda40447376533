"""Tests for the verification checks on a small shared ensemble."""

import numpy as np
import pytest
from pydantic import ValidationError

from itoint.approximation import ApproximationScheme
from itoint.errors import InapplicableCheckError, OffGridError, UsageError
from itoint.library import build_integrand, get_ito_function
from itoint.process import IntegrandFunctional, SimpleProcess, from_simple, markov_functional
from itoint.verification import (
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
    map_paths,
)
from itoint.wiener import TimeGrid


@pytest.fixture
def scheme():
    return ApproximationScheme.dyadic(1.0, 3, 6)


class TestCheckResult:
    def test_verdict_must_match_statistic(self):
        with pytest.raises(ValidationError, match="disagrees"):
            CheckResult(name="x", statistic=2.0, tolerance=1.0, passed=True)

    def test_judge_and_nan(self):
        assert CheckResult.judge("x", 1.0, 1.0).passed
        assert not CheckResult.judge("x", float("nan"), 1.0).passed


class TestMapPaths:
    def test_worker_count_does_not_change_results(self, small_ensemble):
        def work(values):
            return np.column_stack([values[:, -1], np.sum(values, axis=1)])

        serial = map_paths(small_ensemble, work, Execution(chunk_size=64, workers=1))
        threaded = map_paths(small_ensemble, work, Execution(chunk_size=64, workers=4))
        assert serial.tobytes() == threaded.tobytes()
        assert serial.shape == (400, 2)


class TestUniqueness:
    def test_self_agreement(self, small_ensemble, scheme):
        result = check_uniqueness(build_integrand("sin-of-w"), 1.0, scheme, scheme, small_ensemble)
        assert result.passed
        assert result.statistic == 0.0
        assert all(row["ky_fan"] == 0.0 for row in result.diagnostics)

    def test_simple_integrand_gives_zero_diffs(self, small_ensemble):
        sp = SimpleProcess.from_values([0.0, 0.25, 0.5, 0.75, 1.0], [0.0, 1.0, -1.0, 2.0, 0.5])
        a = ApproximationScheme.dyadic(1.0, 2, 5)
        b = ApproximationScheme.dyadic(1.0, 2, 5, level_shift=1)
        result = check_uniqueness(from_simple(sp), 1.0, a, b, small_ensemble)
        assert all(row["mean_abs_diff"] == 0.0 for row in result.diagnostics)
        assert result.passed

    def test_shifted_schemes_agree_for_wiener(self, small_ensemble, scheme):
        shifted = ApproximationScheme.dyadic(1.0, 3, 6, level_shift=1)
        result = check_uniqueness(build_integrand("wiener"), 1.0, scheme, shifted, small_ensemble, threshold=0.3)
        assert result.passed, result.diagnostics
        assert result.report is not None and result.trace is not None
        kyfan = [row["ky_fan"] for row in result.diagnostics]
        assert kyfan[-1] < kyfan[0]

    def test_mismatched_level_counts(self, small_ensemble, scheme):
        other = ApproximationScheme.dyadic(1.0, 3, 5)
        with pytest.raises(UsageError, match="same number of levels"):
            check_uniqueness(build_integrand("wiener"), 1.0, scheme, other, small_ensemble)

    def test_ensemble_must_cover_scheme(self, small_ensemble):
        fine = ApproximationScheme.dyadic(1.0, 8, 9)
        with pytest.raises(OffGridError):
            check_uniqueness(build_integrand("wiener"), 1.0, fine, fine, small_ensemble)


class TestIsometry:
    @pytest.mark.parametrize("kind", ["const", "wiener", "sin-of-w"])
    def test_estimators_agree(self, small_ensemble, kind):
        result = check_isometry(build_integrand(kind), 1.0, 6, small_ensemble)
        row = result.diagnostics[0]
        assert row["z_difference"] <= 4.0, row
        assert result.statistic >= row["z_difference"]
        assert result.tolerance == 3.0

    def test_wiener_matches_closed_form(self, small_ensemble):
        result = check_isometry(build_integrand("wiener"), 1.0, 8, small_ensemble)
        row = result.diagnostics[0]
        # E int_0^1 W^2 ds = 1/2, less the left-sampling discretization 1/(2 * 2**8)
        assert row["expected"] == pytest.approx(0.5 * (1.0 - 2.0**-8))
        assert row["z_time_integral"] < 4.0 and row["z_square_integral"] < 4.0
        assert result.statistic == max(row["z_difference"], row["z_time_integral"], row["z_square_integral"])

    def test_wrong_closed_form_fails(self, small_ensemble):
        wrong = markov_functional(
            "wiener-wrong", lambda w: np.array(w, dtype=np.float64), h2_claim=True,
            isometry_oracle=lambda t, level: 2.0 * t,
        )
        result = check_isometry(wrong, 1.0, 6, small_ensemble)
        assert not result.passed
        assert result.diagnostics[0]["z_difference"] <= 4.0

    def test_closed_form_skipped_when_truncated(self, small_ensemble):
        result = check_isometry(build_integrand("const", {"value": 3.0}), 1.0, 6, small_ensemble, truncation=1.0)
        assert result.diagnostics[0]["expected"] is None

    def test_zero_integrand(self, small_ensemble):
        result = check_isometry(build_integrand("const", {"value": 0.0}), 1.0, 6, small_ensemble)
        assert result.statistic == 0.0 and result.passed
        assert result.diagnostics[0]["z_time_integral"] == 0.0

    def test_refuses_non_h2(self, small_ensemble):
        with pytest.raises(InapplicableCheckError, match="H2"):
            check_isometry(build_integrand("exp-w-squared"), 1.0, 6, small_ensemble)


class TestMartingale:
    @pytest.mark.parametrize("kind", ["const", "wiener"])
    def test_orthogonal_increments(self, small_ensemble, kind):
        tests = [build_integrand(name) for name in ("const", "wiener", "sin-of-w")]
        result = check_martingale(build_integrand(kind), 0.5, 1.0, tests, small_ensemble, level=6)
        assert [row["test_functional"] for row in result.diagnostics] == ["const", "wiener", "sin-of-w"]
        assert max(row["z"] for row in result.diagnostics) <= 4.0, result.diagnostics

    def test_const_increment_is_wiener_increment(self, small_ensemble):
        result = check_martingale(
            build_integrand("const"), 0.5, 1.0, [build_integrand("const")], small_ensemble, level=6,
        )
        values = small_ensemble.values(range(small_ensemble.count))
        grid = small_ensemble.grid
        increments = values[:, grid.index_of(1.0)] - values[:, grid.index_of(0.5)]
        assert result.diagnostics[0]["mean"] == pytest.approx(increments.mean(), abs=1e-12)

    def test_bad_times(self, small_ensemble):
        tests = [build_integrand("const")]
        with pytest.raises(UsageError):
            check_martingale(build_integrand("const"), 1.0, 0.5, tests, small_ensemble, level=6)
        with pytest.raises(OffGridError):
            check_martingale(build_integrand("const"), 0.3, 1.0, tests, small_ensemble, level=6)


class TestContinuity:
    def test_zero_integrand(self, small_ensemble, scheme):
        result = check_continuity(build_integrand("const", {"value": 0.0}), 1.0, scheme, small_ensemble)
        assert all(row["mean"] == 0.0 for row in result.diagnostics)
        assert result.passed

    def test_unit_integrand_follows_wiener(self, small_ensemble, scheme):
        result = check_continuity(build_integrand("const"), 1.0, scheme, small_ensemble)
        for row in result.diagnostics:
            assert row["mean"] == row["wiener_max_increment"]
        assert result.passed

    def test_wiener_integrand_decreases(self, small_ensemble, scheme):
        result = check_continuity(build_integrand("wiener"), 1.0, scheme, small_ensemble)
        means = [row["mean"] for row in result.diagnostics]
        assert means == sorted(means, reverse=True)
        assert result.passed

    def test_needs_two_levels(self, small_ensemble):
        with pytest.raises(UsageError, match="two levels"):
            check_continuity(build_integrand("wiener"), 1.0, ApproximationScheme(1.0, (4,)), small_ensemble)


class TestItoLemma:
    def test_identity_is_exact(self, small_ensemble, scheme):
        result = check_ito_lemma(get_ito_function("identity"), 1.0, scheme, small_ensemble, pilot_level=8)
        assert all(row["mean"] == 0.0 for row in result.diagnostics)
        assert result.statistic == 0.0 and result.passed

    def test_square_residual_is_quadratic_variation_error(self, small_ensemble, scheme):
        result = check_ito_lemma(get_ito_function("square"), 1.0, scheme, small_ensemble, pilot_level=8)
        levels = [row for row in result.diagnostics if row["role"] == "level"]
        pilot = [row for row in result.diagnostics if row["role"] == "pilot"]
        assert len(levels) == 4 and len(pilot) == 1
        assert levels[-1]["threshold"] == pytest.approx(4.0 * pilot[0]["mean"])
        assert result.passed, result.diagnostics

    def test_explicit_threshold(self, small_ensemble, scheme):
        result = check_ito_lemma(get_ito_function("exp"), 1.0, scheme, small_ensemble, threshold=1e-6)
        assert not result.passed
        assert all(row["role"] == "level" for row in result.diagnostics)

    def test_pilot_must_be_finer(self, small_ensemble, scheme):
        with pytest.raises(UsageError, match="pilot"):
            check_ito_lemma(get_ito_function("square"), 1.0, scheme, small_ensemble, pilot_level=6)


class TestL2Decay:
    def test_wiener_decays_like_oracle(self, small_ensemble, scheme):
        result = check_l2_decay(
            build_integrand("wiener"), 1.0, scheme, small_ensemble, TimeGrid.dyadic(8), ratio_threshold=0.25,
        )
        assert result.passed, result.diagnostics
        for row in result.diagnostics:
            assert row["expected"] == pytest.approx(2.0 ** -row["level"] / 2.0)
            assert row["z"] < 4.0

    def test_integrand_without_oracle(self, small_ensemble, scheme):
        result = check_l2_decay(build_integrand("sin-of-w"), 1.0, scheme, small_ensemble, TimeGrid.dyadic(8))
        assert all(row["expected"] is None for row in result.diagnostics)

    def test_wrong_closed_form_fails(self, small_ensemble, scheme):
        wrong = markov_functional(
            "wiener-wrong", lambda w: np.array(w, dtype=np.float64), h2_claim=True,
            l2_oracle=lambda t, level: 10.0 * t * t / 2.0**level / 2.0,
        )
        result = check_l2_decay(wrong, 1.0, scheme, small_ensemble, TimeGrid.dyadic(8), ratio_threshold=0.25)
        assert not result.passed
        assert result.statistic == pytest.approx(max(row["z"] for row in result.diagnostics) / 3.0)

    def test_left_rule_is_not_judged_against_closed_form(self, small_ensemble, scheme):
        result = check_l2_decay(
            build_integrand("wiener"), 1.0, scheme, small_ensemble, TimeGrid.dyadic(8), rule="left",
            ratio_threshold=0.25,
        )
        assert all(row["z"] is None and row["expected"] is not None for row in result.diagnostics)


class TestConvergence:
    def test_every_scheme_level_is_compared_with_reference(self, small_ensemble):
        scheme = ApproximationScheme.dyadic(1.0, 3, 7)
        result = check_convergence(build_integrand("wiener"), 1.0, scheme, small_ensemble, threshold=0.3)
        assert result.passed, result.diagnostics
        assert [row["level"] for row in result.diagnostics] == [3, 4, 5, 6, 7]
        assert all(row["reference_level"] == 8 for row in result.diagnostics)
        assert [row.level for row in result.trace.levels] == [3, 4, 5, 6, 7, 8]
        assert result.trace.accepted_value == result.trace.levels[-1].value

    def test_explicit_reference_level(self, small_ensemble):
        scheme = ApproximationScheme.dyadic(1.0, 3, 5)
        result = check_convergence(
            build_integrand("sin-of-w"), 1.0, scheme, small_ensemble, threshold=0.5, reference_level=8,
        )
        assert [row["level"] for row in result.diagnostics] == [3, 4, 5]
        assert result.diagnostics[-1]["ky_fan"] > 0.0

    def test_reference_must_be_finer(self, small_ensemble):
        scheme = ApproximationScheme.dyadic(1.0, 3, 5)
        with pytest.raises(UsageError, match="finer"):
            check_convergence(build_integrand("wiener"), 1.0, scheme, small_ensemble, reference_level=5)

    def test_needs_two_levels(self, small_ensemble):
        with pytest.raises(UsageError, match="two levels"):
            check_convergence(build_integrand("wiener"), 1.0, ApproximationScheme(1.0, (5,)), small_ensemble)

    def test_reference_must_be_on_ensemble_grid(self, small_ensemble):
        scheme = ApproximationScheme.dyadic(1.0, 6, 8)
        with pytest.raises(OffGridError):
            check_convergence(build_integrand("wiener"), 1.0, scheme, small_ensemble)


class TestQuadraticVariation:
    def test_sum_of_squares_near_t(self, small_ensemble, scheme):
        result = check_quadratic_variation(1.0, scheme, small_ensemble)
        assert max(row["z"] for row in result.diagnostics) < 4.0
        assert all(row["expected"] == 1.0 for row in result.diagnostics)


class TestAdaptedness:
    def test_integral_at_s_ignores_the_future(self, small_ensemble, scheme):
        result = check_adaptedness(build_integrand("exp-w-squared"), 0.5, scheme, small_ensemble, probe_paths=3)
        assert result.passed
        assert all(row["integral_mismatches"] == 0 for row in result.diagnostics)

    def test_prefix_violation_fails(self, small_ensemble, scheme):
        peek = IntegrandFunctional(
            "peek", lambda t, prefix: prefix.value_at(min(t + 0.125, 1.0)),
            h2_claim=True, pathwise_continuous_claim=True,
        )
        result = check_adaptedness(peek, 0.5, scheme, small_ensemble, probe_paths=2)
        assert not result.passed
        assert all("beyond prefix cutoff" in row["violation"] for row in result.diagnostics)

    def test_reading_the_whole_path_is_caught(self, small_ensemble, scheme):
        cheat = IntegrandFunctional(
            "cheat", lambda t, prefix: prefix.path.value_at(min(t + 0.125, 1.0)),
            h2_claim=True, pathwise_continuous_claim=True,
        )
        result = check_adaptedness(cheat, 0.5, scheme, small_ensemble, probe_paths=2)
        assert not result.passed
        assert any(row["integral_mismatches"] > 0 for row in result.diagnostics)
