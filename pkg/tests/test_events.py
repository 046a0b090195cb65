import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import integrate

from rrdesign import events
from rrdesign.design import TrialDesign
from rrdesign.errors import Unreachable
from rrdesign.events import EventCurveInputs
from rrdesign.models import PiecewiseExponential, dropout_hazard


def double_integral(n_arm, lam, eta, r, t):
    """n/r * int_0^min(r,t) int_0^(t-x) lam exp(-(lam+eta) y) dy dx."""
    val, _ = integrate.dblquad(
        lambda y, x: lam * math.exp(-(lam + eta) * y), 0, min(r, t), 0, lambda x: t - x, epsabs=1e-12, epsrel=1e-12
    )
    return n_arm / r * val


def simulate_events(model, n_patients, r, eta, t, seed):
    """Monte Carlo event count: interval-by-interval exponential sampling."""
    rng = np.random.default_rng(seed)
    entry = rng.uniform(0, r, n_patients)
    remaining = np.ones(n_patients, dtype=bool)
    event_time = np.full(n_patients, np.inf)
    edges = list(model.starts) + [math.inf]
    for j, h in enumerate(model.hazards):
        width = edges[j + 1] - edges[j]
        draw = rng.exponential(1 / h, n_patients)
        hit = remaining & (draw < width)
        event_time[hit] = edges[j] + draw[hit]
        remaining &= ~hit
    dropout = rng.exponential(1 / eta, n_patients) if eta > 0 else np.full(n_patients, np.inf)
    return (event_time <= dropout) & (entry + event_time <= t)


@pytest.fixture
def control_inputs():
    return EventCurveInputs(
        PiecewiseExponential.from_median(7.0), 93.0, 186 / 22, dropout_hazard(0.05, 12.0)
    )


class TestClosedForm:
    def test_zero_time(self, control_inputs):
        assert events.expected_events_closed_form(control_inputs, 0.0) == 0.0

    def test_everyone_events_without_dropout(self):
        inputs = EventCurveInputs(PiecewiseExponential.exponential(0.1), 50.0, 10.0, 0.0)
        assert events.expected_events_closed_form(inputs, 1e4) == pytest.approx(50.0, rel=1e-12)

    def test_against_double_integral(self, control_inputs):
        lam = control_inputs.survival.hazards[0]
        oracle = double_integral(93.0, lam, control_inputs.dropout_rate, 186 / 22, 21.7)
        value = events.expected_events_closed_form(control_inputs, 21.7)
        assert value == pytest.approx(oracle, rel=1e-6)

    @pytest.mark.parametrize("t", [0.5, 5.0, 186 / 22, 30.0])
    def test_against_double_integral_before_and_after_accrual(self, control_inputs, t):
        lam = control_inputs.survival.hazards[0]
        oracle = double_integral(93.0, lam, control_inputs.dropout_rate, 186 / 22, t)
        assert events.expected_events_closed_form(control_inputs, t) == pytest.approx(oracle, rel=1e-6)

    def test_rejects_piecewise(self, single_knot):
        with pytest.raises(ValueError):
            events.expected_events_closed_form(EventCurveInputs(single_knot, 10, 5), 3.0)

    def test_instantaneous_accrual(self):
        inputs = EventCurveInputs(PiecewiseExponential.exponential(0.1), 40.0, 0.0, 0.02)
        expected = 40 * 0.1 / 0.12 * -math.expm1(-0.12 * 7.0)
        assert events.expected_events_closed_form(inputs, 7.0) == pytest.approx(expected, rel=1e-14)


class TestQuadrature:
    @pytest.mark.parametrize("t", [0.01, 1.0, 8.0, 21.7, 100.0])
    def test_matches_closed_form(self, control_inputs, t):
        a = events.expected_events_closed_form(control_inputs, t)
        assert events.expected_events_quadrature(control_inputs, t) == pytest.approx(a, rel=1e-6)

    def test_long_run_limit(self, control_inputs):
        lam, eta = control_inputs.survival.hazards[0], control_inputs.dropout_rate
        value = events.expected_events_quadrature(control_inputs, 1e4)
        assert value == pytest.approx(93.0 * lam / (lam + eta), rel=1e-8)

    def test_piecewise_against_monte_carlo(self, single_knot):
        r, eta, t, n = 10.0, dropout_hazard(0.05, 12.0), 24.0, 1_000_000
        inputs = EventCurveInputs(single_knot, 1.0, r, eta)
        hits = simulate_events(single_knot, n, r, eta, t, seed=42)
        p = hits.mean()
        se = math.sqrt(p * (1 - p) / n)
        assert abs(events.expected_events_quadrature(inputs, t) - p) < 3 * se

    def test_by_interval_sums(self, single_knot):
        inputs = EventCurveInputs(single_knot, 100.0, 10.0, 0.01)
        parts = events.expected_events_quadrature(inputs, 15.0, by_interval=True)
        assert parts.shape == (2,)
        assert parts.sum() == pytest.approx(events.expected_events_quadrature(inputs, 15.0), rel=1e-10)


@st.composite
def curve_inputs(draw):
    h = draw(st.lists(st.floats(0.01, 0.5), min_size=1, max_size=3))
    gaps = draw(st.lists(st.floats(0.5, 8.0), min_size=len(h) - 1, max_size=len(h) - 1))
    model = PiecewiseExponential(tuple(h), tuple(np.cumsum(gaps)))
    return EventCurveInputs(model, draw(st.floats(1, 500)), draw(st.floats(0, 30)), draw(st.floats(0, 0.05)))


class TestExact:
    @settings(max_examples=60, deadline=None)
    @given(curve_inputs(), st.floats(0.0, 60.0))
    def test_matches_quadrature(self, inputs, t):
        exact = events.expected_events_exact(inputs, t)
        quad = events.expected_events_quadrature(inputs, t)
        assert exact == pytest.approx(quad, rel=1e-7, abs=1e-7)

    @settings(max_examples=40, deadline=None)
    @given(curve_inputs(), st.floats(0.0, 40.0), st.floats(0.01, 10.0))
    def test_nondecreasing_in_time(self, inputs, t, dt):
        assert events.expected_events(inputs, t + dt) >= events.expected_events(inputs, t) - 1e-12

    @settings(max_examples=40, deadline=None)
    @given(curve_inputs(), st.floats(0.0, 60.0))
    def test_bounded_by_arm_size(self, inputs, t):
        assert 0.0 <= events.expected_events(inputs, t) <= inputs.n_arm * (1 + 1e-12)

    @pytest.mark.parametrize("t", [1e-300, 1e-12, 1e-6, 1e-4])
    def test_small_time_limit(self, t):
        # E(t) = n lam t^2 / (2 r) (1 - k t / 3 + ...) while t < r
        lam, eta, n, r = 0.375, 0.01, 100.0, 10.0
        inputs = EventCurveInputs(PiecewiseExponential.exponential(lam), n, r, eta)
        expected = n * lam * t * t / (2 * r) * (1 - (lam + eta) * t / 3)
        assert events.expected_events_exact(inputs, t) == pytest.approx(expected, rel=1e-9)

    def test_by_interval_matches_quadrature(self, single_knot):
        inputs = EventCurveInputs(single_knot, 100.0, 10.0, 0.01)
        exact = events.expected_events_by_interval(inputs, 15.0)
        quad = events.expected_events_quadrature(inputs, 15.0, by_interval=True)
        assert np.allclose(exact, quad, rtol=1e-8)

    def test_negative_time(self, control_inputs):
        with pytest.raises(ValueError):
            events.expected_events(control_inputs, -1.0)


class TestTrialDuration:
    def test_checkmate017(self, cm017):
        assert events.trial_duration(cm017, 133) == pytest.approx(21.7, abs=0.3)

    def test_zero_events(self, cm017):
        assert events.trial_duration(cm017, 0) == 0.0

    def test_root_is_accurate(self, cm017):
        t = events.trial_duration(cm017, 133)
        e, c = events.event_curves(cm017, t)
        assert e + c == pytest.approx(133, abs=1e-8)

    def test_unreachable(self, cm017):
        limit = events.asymptotic_events(cm017)
        with pytest.raises(Unreachable):
            events.trial_duration(cm017, limit + 1e-6)
        with pytest.raises(Unreachable):
            events.trial_duration(cm017, 186)

    def test_asymptote_by_long_horizon(self, cm017):
        e, c = events.event_curves(cm017, 1e5)
        assert e + c == pytest.approx(events.asymptotic_events(cm017), rel=1e-10)

    def test_monotone_in_d(self, cm017):
        durations = [events.trial_duration(cm017, d) for d in (50, 100, 133, 150)]
        assert durations == sorted(durations)

    def test_events_at_duration(self, cm017):
        t, e, c = events.events_at_duration(cm017, 133)
        assert e + c == pytest.approx(133, abs=1e-8)
        assert e < c  # experimental arm has the lower hazard at 1:1


class TestRatioLimits:
    def test_no_dropout_long_run_is_phi(self):
        assert events.event_ratio_limits(0.05, 0.1, 0.0, 1.7)[1] == pytest.approx(1.7)

    def test_short_run_balanced_at_inverse_hr(self):
        hr = 0.6
        assert events.event_ratio_limits(0.1 * hr, 0.1, 0.01, 1 / hr)[0] == pytest.approx(1.0)

    @pytest.mark.parametrize("seed", range(5))
    def test_curve_ratio_reaches_limits(self, seed):
        rng = np.random.default_rng(seed)
        lam_c, hr, eta, phi = rng.uniform(0.02, 0.3), rng.uniform(0.3, 1.5), rng.uniform(0, 0.05), rng.uniform(0.5, 3)
        design = TrialDesign(PiecewiseExponential.exponential(lam_c), hr, 300, 20.0, phi, eta)
        short, long = events.event_ratio_limits(lam_c * hr, lam_c, eta, phi)
        e, c = events.event_curves(design, 1e-4)
        assert e / c == pytest.approx(short, rel=1e-3)
        e, c = events.event_curves(design, 1e4)
        assert e / c == pytest.approx(long, rel=1e-3)
