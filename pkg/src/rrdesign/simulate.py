"""Monte Carlo simulation of event-driven two-arm trials.

Replicate k, patient i and draw purpose p always read the same uniform, so a
replicate can be regenerated alone, replicates can run in any order, and
designs differing only in the cutoff share their latent patients (common
random numbers).
"""

from __future__ import annotations

import csv
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Iterator

import numpy as np
from numpy.typing import NDArray

from rrdesign import power as pw
from rrdesign.design import TrialDesign
from rrdesign.errors import DegenerateFit, Unreachable
from rrdesign.models import CONTROL, DROPOUT, ENTRY, EVENT, EXPERIMENTAL, stream, uniforms

CHUNK = 500


@dataclass(frozen=True)
class PatientRecord:
    arm: str
    entry: float
    latent_event: float
    latent_dropout: float


@dataclass(frozen=True)
class LatentCohort:
    """Latent times for one or more replicates; leading axis is the replicate."""

    arm: NDArray  # (n,) 1 experimental, 0 control
    entry: NDArray
    latent_event: NDArray
    latent_dropout: NDArray

    def records(self) -> list[PatientRecord]:
        if self.entry.ndim != 1:
            raise ValueError("records() needs a single replicate")
        return [
            PatientRecord(EXPERIMENTAL if a else CONTROL, float(e), float(t), float(l))
            for a, e, t, l in zip(self.arm, self.entry, self.latent_event, self.latent_dropout)
        ]

    def calendar_event_times(self) -> NDArray:
        """Entry + event time where the event precedes dropout, else inf."""
        hit = self.latent_event <= self.latent_dropout
        return np.where(hit, self.entry + self.latent_event, np.inf)


@dataclass(frozen=True)
class TrialDataset:
    """Analysis data at the data cutoff."""

    arm: NDArray
    entry: NDArray
    time: NDArray
    event: NDArray
    cutoff: float
    events_observed: int
    requested: int | None = None

    @property
    def undersupplied(self) -> bool:
        return self.requested is not None and self.events_observed < self.requested

    @property
    def n(self) -> int:
        return len(self.time)

    def write_csv(self, path: str | Path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["arm", "entry", "time", "event", "cutoff"])
            for a, e, t, ev in zip(self.arm, self.entry, self.time, self.event):
                w.writerow(
                    [EXPERIMENTAL if a else CONTROL, repr(float(e)), repr(float(t)), int(ev), repr(float(self.cutoff))]
                )

    @classmethod
    def read_csv(cls, path: str | Path) -> TrialDataset:
        with open(path, newline="") as fh:
            rows = list(csv.DictReader(fh))
        arm = np.array([1 if r["arm"] == EXPERIMENTAL else 0 for r in rows])
        event = np.array([int(r["event"]) for r in rows])
        cutoff = float(rows[0]["cutoff"]) if rows else math.inf
        return cls(
            arm,
            np.array([float(r["entry"]) for r in rows]),
            np.array([float(r["time"]) for r in rows]),
            event,
            cutoff,
            int(event.sum()),
        )


# ---------------------------------------------------------------------------
# drawing patients


def _arm_vector(design: TrialDesign) -> NDArray:
    n_e, n_c = design.arm_counts()
    return np.concatenate([np.ones(n_e, dtype=np.int8), np.zeros(n_c, dtype=np.int8)])


def draw_cohort(design: TrialDesign, replicates: range | int, seed: int) -> LatentCohort:
    """Latent patient times; an int gives one replicate with 1-d arrays."""
    single = isinstance(replicates, int)
    reps = range(replicates, replicates + 1) if single else replicates
    n = design.n
    n_e, _ = design.arm_counts()
    arm = _arm_vector(design)
    r = design.accrual_duration
    shape = (len(reps), n)
    u_entry, u_event, u_drop = np.empty(shape), np.empty(shape), np.empty(shape)
    for row, k in enumerate(reps):
        u_entry[row] = stream(seed, k, ENTRY).random(n)
        u_event[row] = uniforms(stream(seed, k, EVENT), n)
        u_drop[row] = uniforms(stream(seed, k, DROPOUT), n)
    entry = u_entry * r
    latent_event = np.empty(shape)
    latent_event[:, :n_e] = design.experimental.quantile_from_survivor(u_event[:, :n_e])
    latent_event[:, n_e:] = design.control.quantile_from_survivor(u_event[:, n_e:])
    eta = design.dropout_rate
    with np.errstate(divide="ignore"):
        latent_dropout = -np.log(u_drop) / eta if eta > 0 else np.full(shape, np.inf)
    if single:
        return LatentCohort(arm, entry[0], latent_event[0], latent_dropout[0])
    return LatentCohort(arm, entry, latent_event, latent_dropout)


def _cutoffs(calendar: NDArray, d: int) -> NDArray:
    """d-th smallest calendar event time per row; inf when fewer than d events."""
    kth = np.partition(calendar, d - 1, axis=-1)[..., d - 1]
    return kth


def _observe(cohort: LatentCohort, cutoff: NDArray):
    """Observed time, event flag and inclusion mask at a per-replicate cutoff."""
    c = np.asarray(cutoff)[..., None] if np.ndim(cutoff) else cutoff
    calendar = cohort.calendar_event_times()
    event = np.isfinite(calendar) & (calendar <= c)
    admin = c - cohort.entry
    censor_time = np.minimum(cohort.latent_dropout, admin)
    time = np.where(event, cohort.latent_event, censor_time)
    included = cohort.entry <= c
    return time, event, included


def apply_cutoff(cohort: LatentCohort, d: int) -> TrialDataset:
    """Cut a single replicate at its d-th calendar event.

    With fewer than d events ever occurring, the analysis uses maximal
    follow-up and the dataset reports ``undersupplied``.
    """
    if d < 1:
        raise ValueError("d must be at least 1")
    calendar = cohort.calendar_event_times()
    available = int(np.isfinite(calendar).sum())
    cutoff = float(_cutoffs(calendar, d)) if available >= d else math.inf
    time, event, included = _observe(cohort, np.float64(cutoff))
    return TrialDataset(
        cohort.arm[included].astype(int),
        cohort.entry[included],
        time[included],
        event[included].astype(int),
        cutoff,
        int(event[included].sum()),
        d,
    )


def simulate_trial(design: TrialDesign, d: int, replicate: int, seed: int) -> TrialDataset:
    return apply_cutoff(draw_cohort(design, replicate, seed), d)


# ---------------------------------------------------------------------------
# logrank


def logrank_z(time, event, arm) -> float:
    """Standardized logrank statistic, experimental arm observed minus expected.

    Tied event times use the hypergeometric variance.
    """
    time = np.asarray(time, dtype=float)
    event = np.asarray(event).astype(bool)
    arm = np.asarray(arm).astype(bool)
    if not event.any():
        raise DegenerateFit("logrank statistic needs at least one event")
    order = np.argsort(time, kind="stable")
    t_sorted = time[order]
    event_times, d_k = np.unique(time[event], return_counts=True)
    o_k = np.bincount(np.searchsorted(event_times, time[event & arm]), minlength=len(event_times))
    first = np.searchsorted(t_sorted, event_times, side="left")
    n_k = len(time) - first
    exp_at_risk = np.concatenate([np.cumsum(arm[order][::-1])[::-1], [0]])
    n1_k = exp_at_risk[first]
    p = n1_k / n_k
    expected = d_k * p
    with np.errstate(invalid="ignore", divide="ignore"):
        ties = np.where(n_k > 1, (n_k - d_k) / (n_k - 1), 0.0)
    var = np.sum(d_k * p * (1 - p) * ties)
    if var <= 0:
        raise DegenerateFit("logrank variance is zero")
    return float(np.sum(o_k - expected) / math.sqrt(var))


def logrank_statistic(dataset: TrialDataset) -> float:
    return logrank_z(dataset.time, dataset.event, dataset.arm)


def _batch_logrank(time: NDArray, event: NDArray, included: NDArray, arm: NDArray) -> NDArray:
    """Row-wise logrank Z assuming no tied times; tied rows are redone exactly.

    Rows with zero variance give nan.
    """
    t = np.where(included, time, -1.0)
    order = np.argsort(t, axis=1, kind="stable")
    ts = np.take_along_axis(t, order, axis=1)
    ev = np.take_along_axis(event & included, order, axis=1)
    a = np.broadcast_to(arm, t.shape)
    a = np.take_along_axis(a, order, axis=1).astype(float)
    n = t.shape[1]
    at_risk = n - np.arange(n)
    exp_at_risk = np.cumsum(a[:, ::-1], axis=1)[:, ::-1]
    p = exp_at_risk / at_risk
    num = np.sum(np.where(ev, a - p, 0.0), axis=1)
    var = np.sum(np.where(ev, p * (1 - p), 0.0), axis=1)
    with np.errstate(invalid="ignore", divide="ignore"):
        z = np.where(var > 0, num / np.sqrt(var), np.nan)
    tied = np.any((np.diff(ts, axis=1) == 0) & (ts[:, 1:] >= 0) & (ev[:, 1:] | ev[:, :-1]), axis=1)
    for row in np.flatnonzero(tied):
        keep = included[row]
        try:
            z[row] = logrank_z(time[row][keep], event[row][keep], np.broadcast_to(arm, t.shape)[row][keep])
        except DegenerateFit:
            z[row] = np.nan
    return z


# ---------------------------------------------------------------------------
# empirical power


@dataclass(frozen=True)
class PowerEstimate:
    power: float
    mc_se: float
    replicates: int
    mean_duration: float
    mean_events_by_arm: tuple[float, float]
    undersupplied: int = 0
    failed: int = 0


@dataclass
class _Tally:
    rejections: int = 0
    analyzable: int = 0
    duration_sum: float = 0.0
    finite_durations: int = 0
    events_e: float = 0.0
    events_c: float = 0.0
    undersupplied: int = 0
    failed: int = 0

    def add(self, other: _Tally) -> None:
        for name in self.__dataclass_fields__:
            setattr(self, name, getattr(self, name) + getattr(other, name))


def _reject(z: NDArray, theta: float, alpha: float) -> NDArray:
    crit = pw.z_quantile(1.0 - alpha)
    return z > crit if theta > 0 else z < -crit


def _chunk_tally(cohort: LatentCohort, d: int, theta: float, alpha: float) -> _Tally:
    calendar = cohort.calendar_event_times()
    cutoff = _cutoffs(calendar, d)
    time, event, included = _observe(cohort, cutoff)
    z = _batch_logrank(time, event, included, cohort.arm)
    ok = ~np.isnan(z)
    observed = event & included
    finite = np.isfinite(cutoff)
    exp_mask = cohort.arm.astype(bool)
    return _Tally(
        rejections=int(np.sum(_reject(z[ok], theta, alpha))),
        analyzable=int(ok.sum()),
        duration_sum=float(np.sum(cutoff[finite])),
        finite_durations=int(finite.sum()),
        events_e=float(observed[:, exp_mask].sum()),
        events_c=float(observed[:, ~exp_mask].sum()),
        undersupplied=int((~finite).sum()),
        failed=int((~ok).sum()),
    )


def _chunks(replicates: int) -> Iterator[range]:
    for start in range(0, replicates, CHUNK):
        yield range(start, min(start + CHUNK, replicates))


def _power_chunk(args) -> _Tally:
    design, d, seed, reps, alpha = args
    return _chunk_tally(draw_cohort(design, reps, seed), d, design.theta, alpha)


def _estimate(tally: _Tally, replicates: int) -> PowerEstimate:
    m = tally.analyzable
    p = tally.rejections / m if m else math.nan
    return PowerEstimate(
        power=p,
        mc_se=math.sqrt(p * (1 - p) / m) if m else math.nan,
        replicates=m,
        mean_duration=tally.duration_sum / tally.finite_durations if tally.finite_durations else math.inf,
        mean_events_by_arm=(tally.events_e / replicates, tally.events_c / replicates),
        undersupplied=tally.undersupplied,
        failed=tally.failed,
    )


def empirical_power(
    design: TrialDesign,
    d: int | None = None,
    alpha_one_sided: float | None = None,
    replicates: int = 10_000,
    seed: int = 0,
    jobs: int = 1,
) -> PowerEstimate:
    """Rejection rate of the one-sided logrank test over simulated replicates."""
    if replicates < 1:
        raise ValueError("replicates must be at least 1")
    d = design.d if d is None else d
    if d is None or d < 1:
        raise ValueError("need a target event count d >= 1")
    alpha = design.alpha if alpha_one_sided is None else alpha_one_sided
    tasks = [(design, d, seed, reps, alpha) for reps in _chunks(replicates)]
    total = _Tally()
    if jobs > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            for t in pool.map(_power_chunk, tasks):
                total.add(t)
    else:
        for task in tasks:
            total.add(_power_chunk(task))
    return _estimate(total, replicates)


# ---------------------------------------------------------------------------
# event-size calibration


class _CohortBank:
    """Latent draws per chunk, cached when small enough to keep."""

    def __init__(self, design: TrialDesign, replicates: int, seed: int, max_cells: int = 4_000_000):
        self.design = design
        self.seed = seed
        self.ranges = list(_chunks(replicates))
        self.cache = {} if replicates * design.n <= max_cells else None

    def __iter__(self) -> Iterator[LatentCohort]:
        for i, reps in enumerate(self.ranges):
            if self.cache is None:
                yield draw_cohort(self.design, reps, self.seed)
                continue
            if i not in self.cache:
                self.cache[i] = draw_cohort(self.design, reps, self.seed)
            yield self.cache[i]


@dataclass(frozen=True)
class Calibration:
    d: int
    estimate: PowerEstimate
    evaluated: dict[int, float]


def calibrate_events(
    design: TrialDesign,
    target_power: float | None = None,
    alpha_one_sided: float | None = None,
    replicates: int = 10_000,
    seed: int = 0,
) -> Calibration:
    """Smallest d whose simulated power reaches the target.

    Every candidate d is evaluated on the same latent patients, only the
    cutoff moves, so the power-versus-d curve is smooth enough to bisect.
    """
    target = design.target_power if target_power is None else target_power
    alpha = design.alpha if alpha_one_sided is None else alpha_one_sided
    bank = _CohortBank(design, replicates, seed)
    d_max = pw.max_reachable_events(design)
    if d_max < 1:
        raise Unreachable(1, d_max)
    cache: dict[int, PowerEstimate] = {}

    def estimate(d: int) -> PowerEstimate:
        if d not in cache:
            total = _Tally()
            for cohort in bank:
                total.add(_chunk_tally(cohort, d, design.theta, alpha))
            cache[d] = _estimate(total, replicates)
        return cache[d]

    def reaches(d: int) -> bool:
        return estimate(d).power >= target

    try:
        guess = pw.required_events(pw.ApproxMethod.RUBINSTEIN, design, target)
    except Unreachable:
        guess = d_max
    guess = min(max(guess, 1), d_max)
    step = 2
    if reaches(guess):
        hi = guess
        lo = guess - step
        while lo >= 1 and reaches(lo):
            hi, lo, step = lo, lo - step, step * 2
        lo = max(lo, 0)
    else:
        lo = guess
        hi = guess + step
        while hi <= d_max and not reaches(hi):
            lo, hi, step = hi, hi + step, step * 2
        if hi > d_max:
            if not reaches(d_max):
                raise Unreachable(d_max + 1, d_max)
            hi = d_max
    # invariant: lo fails (or is 0), hi reaches
    while hi - lo > 1:
        mid = (lo + hi) // 2
        if reaches(mid):
            hi = mid
        else:
            lo = mid
    return Calibration(hi, estimate(hi), {k: v.power for k, v in sorted(cache.items())})


def mean_duration(design: TrialDesign, d: int, replicates: int = 10_000, seed: int = 0) -> float:
    """Monte Carlo mean calendar time of the d-th event."""
    total, count = 0.0, 0
    for reps in _chunks(replicates):
        cut = _cutoffs(draw_cohort(design, reps, seed).calendar_event_times(), d)
        finite = np.isfinite(cut)
        total += float(cut[finite].sum())
        count += int(finite.sum())
    return total / count if count else math.inf
