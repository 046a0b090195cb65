"""Scenario construction and edge-case comparisons of unequal randomization.

An edge case starts from a 1:1 base design, switches to phi:1, re-derives
the event count that keeps the target power and then solves one free
parameter:

* prolonged trial: nothing else changes, the trial simply runs longer;
* accelerated accrual: n fixed, the accrual rate is raised until the
  expected duration matches the base;
* increased enrollment: rate fixed, patients are added until the expected
  duration matches the base.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Iterable

from scipy import optimize

from rrdesign import events, power as pw, simulate as sim
from rrdesign.design import TrialDesign
from rrdesign.errors import Unreachable
from rrdesign.models import PiecewiseExponential, dropout_hazard

INSTANT_ACCRUAL = 1e-6


class EdgeCase(str, Enum):
    PROLONGED = "ProlongedTrial"
    ACCELERATED = "AcceleratedAccrual"
    INCREASED = "IncreasedEnrollment"

    @property
    def description(self) -> str:
        return {
            EdgeCase.PROLONGED: "Prolonged trial",
            EdgeCase.ACCELERATED: "Accelerated accrual",
            EdgeCase.INCREASED: "Increased enrollment",
        }[self]


class EventSource(str, Enum):
    RUBINSTEIN = "rubinstein"
    SCHOENFELD = "schoenfeld"
    EMPIRICAL = "empirical"


@dataclass(frozen=True)
class SimulationSettings:
    replicates: int = 10_000
    seed: int = 2023


def checkmate017(d: int = 133) -> TrialDesign:
    """Checkmate-017 as re-derived for 80% power at two-sided 0.05."""
    return TrialDesign(
        control=PiecewiseExponential.from_median(7.0),
        hazard_ratio=7.0 / 11.4,
        n=186,
        accrual_rate=22.0,
        phi=1.0,
        dropout_rate=dropout_hazard(0.05, 12),
        alpha=0.025,
        target_power=0.8,
        d=d,
    )


def grid_accrual_rate(hr: float) -> float:
    """Linear rule: 20 patients/month at HR 0.5 up to 50 at HR 0.8."""
    return 20.0 + (50.0 - 20.0) * (hr - 0.5) / (0.8 - 0.5)


def build_grid_design(
    hr: float,
    control_median: float | None,
    event_patient_ratio: float,
    alpha: float = 0.025,
    power: float = 0.8,
    dropout_probability: float = 0.01,
    dropout_months: float = 12.0,
    control: PiecewiseExponential | None = None,
    z_digits: int | None = 2,
) -> TrialDesign:
    """1:1 design on the (HR, d/n) simulation grid.

    d comes from the Schoenfeld ceiling at 1:1 with quantiles rounded to
    ``z_digits`` (1.96 and 0.84 at the defaults), n = ceil(d / (d/n)).
    A ``control`` model overrides the exponential control median.
    """
    if not 0 < hr < 1:
        raise ValueError("grid hazard ratios lie in (0, 1)")
    if not 0 < event_patient_ratio <= 1:
        raise ValueError("event-patient ratio must be in (0, 1]")
    if control is None:
        if control_median is None:
            raise ValueError("need a control median or a control model")
        control = PiecewiseExponential.from_median(control_median)
    d = pw.schoenfeld_events(math.log(hr), 1.0, alpha, power, z_digits)
    n = math.ceil(d / event_patient_ratio - 1e-9)
    return TrialDesign(
        control=control,
        hazard_ratio=hr,
        n=n,
        accrual_rate=grid_accrual_rate(hr),
        phi=1.0,
        dropout_rate=dropout_hazard(dropout_probability, dropout_months),
        alpha=alpha,
        target_power=power,
        d=d,
    )


def variant_events(
    design: TrialDesign,
    source: EventSource | str = EventSource.RUBINSTEIN,
    settings: SimulationSettings | None = None,
) -> int:
    """Events needed by ``design`` (at its own phi) to keep its target power."""
    source = EventSource(source)
    if source is EventSource.EMPIRICAL:
        settings = settings or SimulationSettings()
        return sim.calibrate_events(design, replicates=settings.replicates, seed=settings.seed).d
    method = pw.ApproxMethod.RUBINSTEIN if source is EventSource.RUBINSTEIN else pw.ApproxMethod.SCHOENFELD
    return pw.required_events(method, design)


@dataclass(frozen=True)
class DesignComparison:
    base: TrialDesign
    variant_rr: float
    edge_case: EdgeCase
    design: TrialDesign
    solved_value: float
    d_variant: int
    feasible: bool
    duration: float
    base_duration: float
    relative_change: dict[str, float] = field(default_factory=dict)

    @property
    def accrual_duration(self) -> float:
        return self.design.accrual_duration


def _expected_duration(design: TrialDesign, d: float) -> float:
    try:
        return events.trial_duration(design, d)
    except Unreachable:
        return math.inf


def _pct(new: float, old: float) -> float:
    return 100.0 * (new - old) / old


def _base_duration(base: TrialDesign, fixed_duration: float | None) -> float:
    return events.trial_duration(base, base.d) if fixed_duration is None else fixed_duration


def _check_base(base: TrialDesign) -> None:
    if base.phi != 1.0:
        raise ValueError("edge cases start from a 1:1 base design")
    if base.d is None:
        raise ValueError("base design needs its event count d")


def _resolve_d(base, phi, d_variant, source, settings) -> int:
    if d_variant is not None:
        return d_variant
    if phi == base.phi:
        return base.d
    return variant_events(base.replace(phi=phi, d=None), source, settings)


def edge_case_prolonged(
    base: TrialDesign,
    phi: float,
    d_variant: int | None = None,
    source: EventSource | str = EventSource.RUBINSTEIN,
    settings: SimulationSettings | None = None,
    fixed_duration: float | None = None,
) -> DesignComparison:
    """Same n and accrual rate; report how long the trial now takes."""
    _check_base(base)
    d = _resolve_d(base, phi, d_variant, source, settings)
    base_t = _base_duration(base, fixed_duration)
    variant = base.replace(phi=phi, d=d)
    if phi == base.phi and d == base.d:
        t = base_t
    else:
        t = events.trial_duration(variant, d)
    return DesignComparison(
        base, phi, EdgeCase.PROLONGED, variant, t, d, True, t, base_t,
        {"d": _pct(d, base.d), "duration": _pct(t, base_t), "duration_months": t - base_t},
    )


def edge_case_accelerated(
    base: TrialDesign,
    phi: float,
    fixed_duration: float | None = None,
    d_variant: int | None = None,
    source: EventSource | str = EventSource.RUBINSTEIN,
    settings: SimulationSettings | None = None,
) -> DesignComparison:
    """Same n; solve the accrual rate so the expected duration stays at the base's.

    If even near-instantaneous accrual is too slow the result is infeasible and
    carries that instantaneous-accrual duration.
    """
    _check_base(base)
    d = _resolve_d(base, phi, d_variant, source, settings)
    target = _base_duration(base, fixed_duration)
    r_base = base.accrual_duration

    def design_at(r: float) -> TrialDesign:
        return base.replace(phi=phi, d=d, accrual_rate=base.n / r)

    def gap(r: float) -> float:
        return _expected_duration(design_at(r), d) - target

    if phi == base.phi and d == base.d and fixed_duration is None:
        variant, feasible, t = base, True, target
    else:
        g_lo = gap(INSTANT_ACCRUAL)
        if g_lo > 0:
            variant = base.replace(phi=phi, d=d, accrual_rate=math.inf)
            t = _expected_duration(variant, d)
            feasible = False
        else:
            hi = max(r_base, 1.0)
            while gap(hi) < 0:
                hi *= 2.0
                if hi > 1e6:
                    raise RuntimeError("accrual duration search diverged")
            r = optimize.brentq(gap, INSTANT_ACCRUAL, hi, xtol=1e-10)
            variant = design_at(r)
            t = _expected_duration(variant, d)
            feasible = True
    rate = variant.accrual_rate
    return DesignComparison(
        base, phi, EdgeCase.ACCELERATED, variant, rate, d, feasible, t, target,
        {
            "d": _pct(d, base.d),
            "accrual_rate": _pct(rate, base.accrual_rate) if math.isfinite(rate) else math.inf,
            "accrual_duration": _pct(variant.accrual_duration, r_base),
            "duration": _pct(t, target),
        },
    )


def edge_case_increased_n(
    base: TrialDesign,
    phi: float,
    fixed_duration: float | None = None,
    d_variant: int | None = None,
    source: EventSource | str = EventSource.RUBINSTEIN,
    settings: SimulationSettings | None = None,
    n_max_factor: float = 20.0,
) -> DesignComparison:
    """Same accrual rate; smallest n whose expected duration is within the base's."""
    _check_base(base)
    d = _resolve_d(base, phi, d_variant, source, settings)
    target = _base_duration(base, fixed_duration)

    def duration(n: float) -> float:
        if n < d:
            return math.inf
        return _expected_duration(base.replace(phi=phi, d=d, n=n), d)

    def ok(n: int) -> bool:
        return duration(n) <= target

    if phi == base.phi and d == base.d and fixed_duration is None:
        n_star, feasible = base.n, True
    else:
        n_star, feasible = _smallest_feasible_n(ok, duration, base.n, d, target, n_max_factor)
    variant = base.replace(phi=phi, d=d, n=n_star)
    t = _expected_duration(variant, d)
    return DesignComparison(
        base, phi, EdgeCase.INCREASED, variant, n_star, d, feasible, t, target,
        {"d": _pct(d, base.d), "n": _pct(n_star, base.n), "duration": _pct(t, target)},
    )


def _smallest_feasible_n(ok, duration, n0: int, d: int, target: float, n_max_factor: float) -> tuple[int, bool]:
    n_cap = int(math.ceil(n0 * n_max_factor))
    if ok(n0):
        lo, hi = d, n0  # lo infeasible (zero follow-up margin), hi feasible
    else:
        lo, hi = n0, None
        step = max(1, n0 // 16)
        prev = duration(n0)
        n = n0
        while n < n_cap:
            n = min(n + step, n_cap)
            cur = duration(n)
            if cur <= target:
                hi = n
                break
            if cur > prev:
                break  # past the minimum of the duration curve
            lo, prev, step = n, cur, step * 2
        if hi is None:
            res = optimize.minimize_scalar(duration, bounds=(n0, max(n, n0 + 1)), method="bounded")
            best = int(round(res.x))
            for cand in (best - 1, best, best + 1):
                if cand >= n0 and ok(cand):
                    hi = cand
                    lo = n0
                    break
            else:
                return n0, False
    while hi - lo > 1:
        mid = (lo + hi) // 2
        if ok(mid):
            hi = mid
        else:
            lo = mid
    while hi - 1 >= d and ok(hi - 1):
        hi -= 1
    return hi, True


# ---------------------------------------------------------------------------
# reports


@dataclass(frozen=True)
class CompareRow:
    label: str
    rr: str
    description: str
    d: int | None
    n: int
    accrual_duration: float
    duration: float
    feasible: bool = True
    fixed: tuple[str, ...] = ()
    comparison: DesignComparison | None = None


def rr_label(phi: float) -> str:
    known = {1.0: "1:1", 1.5: "3:2", 2.0: "2:1", 0.5: "1:2", 2 / 3: "2:3"}
    for k, v in known.items():
        if math.isclose(phi, k):
            return v
    return f"{phi:g}:1"


def compare_designs(
    base: TrialDesign,
    phis: Iterable[float] = (1.5, 2.0),
    source: EventSource | str = EventSource.RUBINSTEIN,
    settings: SimulationSettings | None = None,
    simulate_durations: bool = False,
) -> list[CompareRow]:
    """Base design plus prolonged / accelerated / increased variants per phi.

    With ``simulate_durations`` every reported duration is the Monte Carlo
    mean time of the d-th event and the base's simulated duration is the
    timeline the other two edge cases must keep.
    """
    _check_base(base)
    settings = settings or SimulationSettings()

    def reported_duration(design: TrialDesign, d: int) -> float:
        if simulate_durations:
            return sim.mean_duration(design, d, settings.replicates, settings.seed)
        return events.trial_duration(design, d)

    base_t = reported_duration(base, base.d)
    rows = [CompareRow("Base", rr_label(base.phi), "Protocol", base.d, base.n, base.accrual_duration, base_t)]
    k = 1
    for phi in phis:
        try:
            d = variant_events(base.replace(phi=phi, d=None), source, settings)
        except Unreachable:
            # no event count keeps the power at this ratio: every edge case fails
            for case in EdgeCase:
                rows.append(
                    CompareRow(f"Alt {k}", rr_label(phi), case.description, None, base.n,
                               base.accrual_duration, math.inf, False)
                )
                k += 1
            continue
        cases = (
            edge_case_prolonged(base, phi, d_variant=d, fixed_duration=base_t),
            edge_case_accelerated(base, phi, fixed_duration=base_t, d_variant=d),
            edge_case_increased_n(base, phi, fixed_duration=base_t, d_variant=d),
        )
        for cmp in cases:
            fixed = {
                EdgeCase.PROLONGED: ("n", "accrual_duration"),
                EdgeCase.ACCELERATED: ("n", "duration") if cmp.feasible else ("n",),
                EdgeCase.INCREASED: ("duration",),
            }[cmp.edge_case]
            t = reported_duration(cmp.design, d)
            rows.append(
                CompareRow(
                    f"Alt {k}",
                    rr_label(phi),
                    cmp.edge_case.description,
                    d,
                    cmp.design.n,
                    cmp.design.accrual_duration,
                    t,
                    cmp.feasible,
                    fixed,
                    cmp,
                )
            )
            k += 1
    return rows


def summarize_grid(
    hazard_ratios: Iterable[float] = (0.5, 0.6, 0.7, 0.8),
    control_medians: Iterable[float] = (6.0, 12.0, 24.0),
    event_patient_ratios: Iterable[float] = (0.5, 0.6, 0.7, 0.8),
    phis: Iterable[float] = (1.5, 2.0),
    source: EventSource | str = EventSource.RUBINSTEIN,
    settings: SimulationSettings | None = None,
    dropout_probability: float = 0.01,
) -> list[dict]:
    """One row per (HR, CM, d/n, phi, edge case) with solved values and changes."""
    rows = []
    for hr in hazard_ratios:
        for cm in control_medians:
            for ratio in event_patient_ratios:
                base = build_grid_design(hr, cm, ratio, dropout_probability=dropout_probability)
                base_t = events.trial_duration(base, base.d)
                for phi in phis:
                    key = {"hr": hr, "control_median": cm, "event_patient_ratio": ratio, "phi": phi}
                    try:
                        d = variant_events(base.replace(phi=phi, d=None), source, settings)
                    except Unreachable as exc:
                        for case in EdgeCase:
                            rows.append({**key, "edge_case": case.value, "feasible": False, "error": str(exc)})
                        continue
                    for fn in (edge_case_prolonged, edge_case_accelerated, edge_case_increased_n):
                        cmp = fn(base, phi, d_variant=d, fixed_duration=base_t)
                        rows.append(_grid_row(key, base, base_t, cmp))
    return rows


def _grid_row(key: dict, base: TrialDesign, base_t: float, cmp: DesignComparison) -> dict:
    return {
        **key,
        "edge_case": cmp.edge_case.value,
        "d_base": base.d,
        "n_base": base.n,
        "rate_base": base.accrual_rate,
        "duration_base": base_t,
        "d": cmp.d_variant,
        "n": cmp.design.n,
        "accrual_rate": cmp.design.accrual_rate,
        "accrual_duration": cmp.design.accrual_duration,
        "duration": cmp.duration,
        "feasible": cmp.feasible,
        "d_change": cmp.d_variant - base.d,
        "d_change_pct": _pct(cmp.d_variant, base.d),
        "duration_change_pct": _pct(cmp.duration, base_t),
        "rate_change_pct": _pct(cmp.design.accrual_rate, base.accrual_rate)
        if math.isfinite(cmp.design.accrual_rate)
        else math.inf,
        "n_change_pct": _pct(cmp.design.n, base.n),
        "error": "",
    }
