"""Tests for simple-process integrals and their limits."""

import numpy as np
import pytest
from pydantic import ValidationError

from itoint.approximation import ApproximationScheme
from itoint.errors import OffGridError
from itoint.integrator import (
    IntegralTrace,
    TraceLevel,
    integral_path,
    integrate_general,
    integrate_simple,
    level_integrals,
    max_increments,
    partial_integrals,
)
from itoint.library import build_integrand
from itoint.process import SimpleProcess, from_simple
from itoint.wiener import TimeGrid


def _left_wiener(knots):
    """c_i = W(t_{i-1})."""
    return SimpleProcess(np.asarray(knots), tuple(lambda p: p.current() for _ in knots))


class TestIntegrateSimple:
    def test_zero_process(self, dyadic_path):
        sp = SimpleProcess.from_values(TimeGrid.dyadic(4).knots, np.zeros(17))
        assert integrate_simple(sp, 1.0, dyadic_path) == 0.0

    def test_unit_process_telescopes(self, dyadic_path):
        sp = SimpleProcess.from_values(TimeGrid.dyadic(6).knots, np.ones(65))
        for t in [0.25, 0.5, 1.0]:
            assert integrate_simple(sp, t, dyadic_path) == dyadic_path.value_at(t)

    def test_left_wiener_discrete_identity(self, dyadic_path):
        knots = TimeGrid.dyadic(6).knots
        w = dyadic_path.values
        expected = 0.5 * (w[-1] ** 2 - np.sum(np.diff(w) ** 2))
        value = integrate_simple(_left_wiener(knots), 1.0, dyadic_path)
        assert value == pytest.approx(expected, rel=1e-12)

    def test_time_zero_and_mid_interval(self, dyadic_path):
        sp = SimpleProcess.from_values([0.0, 0.5, 1.0], [5.0, 2.0, 3.0])
        assert integrate_simple(sp, 0.0, dyadic_path) == 0.0
        w = dyadic_path.value_at
        expected = 2.0 * w(0.5) + 3.0 * (w(0.75) - w(0.5))
        assert integrate_simple(sp, 0.75, dyadic_path) == pytest.approx(expected, rel=1e-12)

    def test_constant_after_last_knot(self, dyadic_path):
        sp = SimpleProcess.from_values([0.0, 0.25, 0.5], [0.0, 1.0, -1.0])
        assert integrate_simple(sp, 1.0, dyadic_path) == integrate_simple(sp, 0.5, dyadic_path)

    def test_refined_representation_is_bit_identical(self, dyadic_path):
        coarse = SimpleProcess.from_values([0.0, 0.25, 0.5, 1.0], [0.0, 1.5, -0.5, 2.0])
        fine_knots = TimeGrid.dyadic(4).knots
        owner = np.searchsorted(coarse.knots, fine_knots, side="left")
        fine_values = np.append(coarse.coefficient_values(dyadic_path), 0.0)[owner]
        fine = SimpleProcess.from_values(fine_knots, fine_values)
        assert integrate_simple(fine, 1.0, dyadic_path) == integrate_simple(coarse, 1.0, dyadic_path)

    def test_linearity(self, dyadic_path):
        knots = TimeGrid.dyadic(3).knots
        a = _left_wiener(knots)
        b = SimpleProcess.from_values(knots, np.linspace(0.0, 1.0, knots.size))
        combined = a.combine(2.0, b, -3.0)
        expected = 2.0 * integrate_simple(a, 1.0, dyadic_path) - 3.0 * integrate_simple(b, 1.0, dyadic_path)
        assert integrate_simple(combined, 1.0, dyadic_path) == pytest.approx(expected, rel=1e-12, abs=1e-14)

    def test_off_grid_time(self, dyadic_path):
        sp = SimpleProcess.from_values([0.0, 0.5, 1.0], [0.0, 1.0, 1.0])
        with pytest.raises(OffGridError):
            integrate_simple(sp, 0.3, dyadic_path)


class TestIntegralPath:
    def test_matches_pointwise_integrals(self, dyadic_path):
        sp = _left_wiener(TimeGrid.dyadic(3).knots)
        running = integral_path(sp, dyadic_path)
        for t in [0.125, 0.3125, 0.5, 1.0]:
            assert running.value_at(t) == pytest.approx(integrate_simple(sp, t, dyadic_path), rel=1e-12, abs=1e-15)
        assert running.pairs()[0] == (0.0, 0.0)

    def test_max_increments_per_row(self, dyadic_path):
        sp = _left_wiener(TimeGrid.dyadic(3).knots)
        running = integral_path(sp, dyadic_path)
        rows = np.stack([running.values, -2.0 * running.values, np.zeros_like(running.values)])
        largest = np.max(np.abs(np.diff(running.values)))
        assert max_increments(rows).tolist() == [largest, 2.0 * largest, 0.0]

    def test_partial_integrals_shape_check(self):
        with pytest.raises(ValueError):
            partial_integrals(np.ones((2, 3)), np.zeros((2, 3)))


class TestIntegrateGeneral:
    def test_trace_levels_and_accepted_value(self, small_ensemble):
        f = build_integrand("wiener")
        scheme = ApproximationScheme.dyadic(1.0, 3, 8)
        trace = integrate_general(f, 1.0, scheme, small_ensemble.path(0))
        assert [row.grid_size for row in trace.levels] == [8, 16, 32, 64, 128, 256]
        assert trace.accepted_value == trace.levels[-1].value
        assert list(trace.to_frame().columns) == ["level", "grid_size", "value"]

    def test_batch_levels_match_trace(self, small_ensemble):
        f = build_integrand("wiener")
        scheme = ApproximationScheme.dyadic(1.0, 2, 6)
        table = level_integrals(f, scheme, small_ensemble.grid, small_ensemble.values(range(2)))
        for row in range(2):
            trace = integrate_general(f, 1.0, scheme, small_ensemble.path(row))
            assert table[row].tolist() == [level.value for level in trace.levels]

    def test_simple_integrand_is_reproduced(self, small_ensemble):
        sp = SimpleProcess.from_values([0.0, 0.25, 0.5, 0.75, 1.0], [0.0, 1.0, -2.0, 0.5, 3.0])
        scheme = ApproximationScheme.dyadic(1.0, 2, 5)
        path = small_ensemble.path(1)
        trace = integrate_general(from_simple(sp), 1.0, scheme, path)
        for level in trace.levels:
            assert level.value == integrate_simple(sp, 1.0, path)

    def test_trace_validation(self):
        rows = [TraceLevel(level=2, grid_size=4, value=1.0), TraceLevel(level=3, grid_size=8, value=2.0)]
        with pytest.raises(ValidationError, match="finest"):
            IntegralTrace(t=1.0, levels=rows, accepted_value=1.0)
        with pytest.raises(ValidationError, match="increasing"):
            IntegralTrace(t=1.0, levels=rows[::-1], accepted_value=1.0)

