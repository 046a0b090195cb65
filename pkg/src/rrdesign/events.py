"""Expected event counts over calendar time and the event-driven duration.

For one arm with n_arm patients, uniform entry on [0, r], event density f and
exponential dropout with hazard eta, the expected number of events by
calendar time t is

    n_arm / r * int_0^{min(r, t)} G(t - x) dx,   G(u) = int_0^u f(y) exp(-eta y) dy.

Three evaluations are provided: the exponential closed form, numerical
quadrature over entry time, and an exact piecewise antiderivative of G that
the solvers use.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import integrate, optimize

from rrdesign.design import TrialDesign
from rrdesign.errors import Unreachable
from rrdesign.models import PiecewiseExponential

ROOT_XTOL = 1e-12


@dataclass(frozen=True)
class EventCurveInputs:
    """One arm's ingredients for its expected event curve."""

    survival: PiecewiseExponential
    n_arm: float
    accrual_duration: float
    dropout_rate: float = 0.0

    def __post_init__(self):
        if self.n_arm < 0:
            raise ValueError("arm size must be nonnegative")
        if self.accrual_duration < 0:
            raise ValueError("accrual duration must be nonnegative")
        if self.dropout_rate < 0:
            raise ValueError("dropout rate must be nonnegative")


@dataclass(frozen=True)
class ExpectedEventCount:
    t: float
    value: float


def arm_inputs(design: TrialDesign) -> tuple[EventCurveInputs, EventCurveInputs]:
    """(experimental, control) curve inputs with arm sizes n*pi and n*(1-pi)."""
    r = design.accrual_duration
    return (
        EventCurveInputs(design.experimental, design.n_experimental, r, design.dropout_rate),
        EventCurveInputs(design.control, design.n_control, r, design.dropout_rate),
    )


def _check_time(t: float) -> None:
    if t < 0 or math.isnan(t):
        raise ValueError("time must be nonnegative")


# ---------------------------------------------------------------------------
# event mass G and its antiderivative


def _segments(model: PiecewiseExponential, eta: float):
    """Per-segment (start, end, hazard, k, S~(start), G(start)) with S~ = S * exp(-eta y)."""
    out = []
    s_tilde, g = 1.0, 0.0
    ends = model.cuts + (math.inf,)
    for start, end, lam in zip(model.starts, ends, model.hazards):
        k = lam + eta
        out.append((start, end, lam, k, s_tilde, g))
        if math.isfinite(end):
            width = end - start
            g += lam / k * s_tilde * -math.expm1(-k * width)
            s_tilde *= math.exp(-k * width)
    return out


def _segment_mass(seg, u: float) -> float:
    """int_start^{min(u, end)} f(y) exp(-eta y) dy for one segment."""
    start, end, lam, k, s_tilde, _ = seg
    if u <= start:
        return 0.0
    w = min(u, end) - start
    return lam / k * s_tilde * -math.expm1(-k * w)


def _ramp(x: float) -> float:
    """x + expm1(-x), by series where the direct form cancels."""
    if x < 1e-2:
        return x * x * (1 / 2 - x * (1 / 6 - x * (1 / 24 - x * (1 / 120 - x / 720))))
    return x + math.expm1(-x)


def _segment_mass_integral(seg, u: float) -> float:
    """int_0^u (segment mass up to v) dv."""
    start, end, lam, k, s_tilde, _ = seg
    if u <= start:
        return 0.0
    c = lam / k * s_tilde
    w = min(u, end) - start
    inside = c * _ramp(k * w) / k
    if u > end:
        inside += _segment_mass(seg, end) * (u - end)
    return inside


def event_mass(model: PiecewiseExponential, eta: float, u: float, by_interval: bool = False):
    """Probability that a patient followed for ``u`` months has had an event."""
    segs = _segments(model, eta)
    masses = [_segment_mass(seg, u) for seg in segs]
    return np.array(masses) if by_interval else math.fsum(masses)


def asymptotic_event_probability(model: PiecewiseExponential, eta: float) -> float:
    """Probability of an event before dropout, i.e. G(infinity)."""
    return event_mass(model, eta, math.inf)


# ---------------------------------------------------------------------------
# expected events


def expected_events_closed_form(inputs: EventCurveInputs, t: float) -> float:
    """Exponential survival, exponential dropout and uniform entry."""
    _check_time(t)
    if not inputs.survival.is_exponential:
        raise ValueError("closed form needs exponential survival; use the quadrature form")
    lam = inputs.survival.hazards[0]
    eta = inputs.dropout_rate
    k = lam + eta
    r = inputs.accrual_duration
    if r == 0:
        return inputs.n_arm * lam / k * -math.expm1(-k * t)
    value = (
        lam / k * min(r, t)
        - lam / k**2 * math.exp(k * min(r - t, 0.0))
        + lam / k**2 * math.exp(-k * t)
    )
    return inputs.n_arm / r * value


def expected_events_quadrature(
    inputs: EventCurveInputs, t: float, by_interval: bool = False, epsabs: float = 1e-8
):
    """Adaptive quadrature over entry time of the closed-form inner integral.

    With ``by_interval`` the events are split by the follow-up interval of the
    survival model in which they occur.
    """
    _check_time(t)
    model, eta, r = inputs.survival, inputs.dropout_rate, inputs.accrual_duration
    if r == 0:
        return inputs.n_arm * event_mass(model, eta, t, by_interval)
    segs = _segments(model, eta)
    lo = t - min(r, t)
    points = [c for c in model.cuts if lo < c < t] or None

    def integrate_segment(seg):
        if t <= seg[0]:
            return 0.0
        val, _ = integrate.quad(
            lambda u: _segment_mass(seg, u), lo, t, points=points, epsabs=epsabs, epsrel=1e-12, limit=200
        )
        return val

    parts = np.array([integrate_segment(seg) for seg in segs])
    parts = parts / r * inputs.n_arm
    return parts if by_interval else float(parts.sum())


def expected_events_exact(inputs: EventCurveInputs, t: float, by_interval: bool = False):
    """Exact evaluation through the antiderivative of the event mass."""
    _check_time(t)
    model, eta, r = inputs.survival, inputs.dropout_rate, inputs.accrual_duration
    segs = _segments(model, eta)
    if r == 0:
        out = np.array([_segment_mass(seg, t) for seg in segs]) * inputs.n_arm
    else:
        lo = t - min(r, t)
        out = np.array(
            [_segment_mass_integral(seg, t) - _segment_mass_integral(seg, lo) for seg in segs]
        )
        out = out / r * inputs.n_arm
    return out if by_interval else float(math.fsum(out))


def expected_events(inputs: EventCurveInputs, t: float) -> float:
    return expected_events_exact(inputs, t)


def expected_events_by_interval(inputs: EventCurveInputs, t: float) -> np.ndarray:
    return expected_events_exact(inputs, t, by_interval=True)


def event_curves(design: TrialDesign, t: float) -> tuple[float, float]:
    """Expected (experimental, control) events by calendar time ``t``."""
    e, c = arm_inputs(design)
    return expected_events(e, t), expected_events(c, t)


def asymptotic_events(design: TrialDesign) -> float:
    """Expected total events with unlimited follow-up, E(D(infinity))."""
    eta = design.dropout_rate
    return design.n_experimental * asymptotic_event_probability(
        design.experimental, eta
    ) + design.n_control * asymptotic_event_probability(design.control, eta)


def trial_duration(design: TrialDesign, d: float) -> float:
    """Earliest calendar time at which the expected total events reach ``d``."""
    if d < 0:
        raise ValueError("event count must be nonnegative")
    if d == 0:
        return 0.0
    limit = asymptotic_events(design)
    if d >= limit * (1 - 1e-9):
        raise Unreachable(d, limit)
    e, c = arm_inputs(design)

    def excess(t: float) -> float:
        return expected_events(e, t) + expected_events(c, t) - d

    hi = max(design.accrual_duration, 1.0)
    while excess(hi) <= 0:
        hi *= 2.0
        if hi > 1e9:
            raise Unreachable(d, limit)
    return optimize.brentq(excess, 0.0, hi, xtol=ROOT_XTOL, rtol=4 * np.finfo(float).eps, maxiter=500)


def events_at_duration(design: TrialDesign, d: float) -> tuple[float, float, float]:
    """(t_d, E(D_e(t_d)), E(D_c(t_d)))."""
    t_d = trial_duration(design, d)
    e, c = event_curves(design, t_d)
    return t_d, e, c


def event_ratio_limits(lam_e: float, lam_c: float, eta: float, phi: float) -> tuple[float, float]:
    """Limits of E(D_e(t)) / E(D_c(t)) as t -> 0+ and t -> infinity."""
    short = phi * lam_e / lam_c
    long = phi * (lam_e / (lam_e + eta)) / (lam_c / (lam_c + eta))
    return short, long
