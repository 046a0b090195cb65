"""Survival, accrual and dropout primitives.

All times are in months. Hazards are per month.
"""

from __future__ import annotations

import functools
import math
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np
from numpy.typing import ArrayLike, NDArray

EXPERIMENTAL = "experimental"
CONTROL = "control"

# purpose tags for counter-addressed random streams
ENTRY, EVENT, DROPOUT = 0, 1, 2


class SurvivalPoint(NamedTuple):
    hazard: float
    cumulative_hazard: float
    survivor: float
    density: float


@dataclass(frozen=True)
class PiecewiseExponential:
    """Piecewise-constant hazard curve.

    ``cuts`` holds the interior change points t_1 < ... < t_{J-1}; the first
    interval starts at 0 and the last one is open ended. Interval j covers
    [t_{j-1}, t_j), so the hazard is right-continuous.
    """

    hazards: tuple[float, ...]
    cuts: tuple[float, ...] = ()

    def __post_init__(self):
        hazards = tuple(float(h) for h in np.ravel(self.hazards))
        cuts = tuple(float(c) for c in np.ravel(self.cuts))
        if len(hazards) != len(cuts) + 1:
            raise ValueError("need exactly one more hazard than cut points")
        if not all(math.isfinite(h) and h > 0 for h in hazards):
            raise ValueError("hazards must be strictly positive and finite")
        if cuts and (cuts[0] <= 0 or any(b <= a for a, b in zip(cuts, cuts[1:]))):
            raise ValueError("cuts must be strictly increasing and positive")
        object.__setattr__(self, "hazards", hazards)
        object.__setattr__(self, "cuts", cuts)

    @classmethod
    def exponential(cls, rate: float) -> PiecewiseExponential:
        return cls((rate,))

    @classmethod
    def from_median(cls, median: float) -> PiecewiseExponential:
        return cls((math.log(2) / median,))

    @classmethod
    def from_dropout(cls, probability: float, months: float) -> PiecewiseExponential:
        """Exponential model with ``probability`` of an event every ``months``."""
        return cls((dropout_hazard(probability, months),))

    @property
    def n_intervals(self) -> int:
        return len(self.hazards)

    @property
    def starts(self) -> tuple[float, ...]:
        return (0.0,) + self.cuts

    @property
    def is_exponential(self) -> bool:
        return len(self.hazards) == 1

    def scaled(self, factor: float) -> PiecewiseExponential:
        """Proportional-hazards counterpart with every hazard times ``factor``."""
        return PiecewiseExponential(tuple(h * factor for h in self.hazards), self.cuts)

    def merged(self) -> PiecewiseExponential:
        """Drop cut points that separate equal hazards."""
        hazards = [self.hazards[0]]
        cuts = []
        for c, h in zip(self.cuts, self.hazards[1:]):
            if h != hazards[-1]:
                cuts.append(c)
                hazards.append(h)
        return PiecewiseExponential(tuple(hazards), tuple(cuts))

    def _cumulative_at_starts(self) -> NDArray:
        widths = np.diff(self.starts)
        return np.concatenate([[0.0], np.cumsum(np.asarray(self.hazards[:-1]) * widths)])

    def interval_index(self, t: ArrayLike) -> NDArray:
        return np.searchsorted(np.asarray(self.cuts), np.asarray(t, dtype=float), side="right")

    def hazard(self, t: ArrayLike) -> NDArray:
        return np.asarray(self.hazards)[self.interval_index(t)]

    def cumulative_hazard(self, t: ArrayLike) -> NDArray:
        t = np.asarray(t, dtype=float)
        if np.any(t < 0):
            raise ValueError("time must be nonnegative")
        j = self.interval_index(t)
        starts = np.asarray(self.starts)
        return self._cumulative_at_starts()[j] + np.asarray(self.hazards)[j] * (t - starts[j])

    def survivor(self, t: ArrayLike) -> NDArray:
        return np.exp(-self.cumulative_hazard(t))

    def cdf(self, t: ArrayLike) -> NDArray:
        return -np.expm1(-self.cumulative_hazard(t))

    def density(self, t: ArrayLike) -> NDArray:
        return self.hazard(t) * self.survivor(t)

    def inverse_cumulative_hazard(self, h: ArrayLike) -> NDArray:
        """Time at which the cumulative hazard reaches ``h``."""
        h = np.asarray(h, dtype=float)
        at_starts = self._cumulative_at_starts()
        j = np.searchsorted(at_starts, h, side="right") - 1
        j = np.clip(j, 0, self.n_intervals - 1)
        return np.asarray(self.starts)[j] + (h - at_starts[j]) / np.asarray(self.hazards)[j]

    def quantile_from_survivor(self, u: ArrayLike) -> NDArray:
        """Inverse survivor transform: the time t with S(t) = u, u in (0, 1]."""
        return self.inverse_cumulative_hazard(-np.log(u))


def dropout_hazard(probability: float, months: float) -> float:
    """Exponential hazard giving ``probability`` of dropping out within ``months``."""
    if not 0 <= probability < 1:
        raise ValueError("dropout probability must be in [0, 1)")
    if months <= 0:
        raise ValueError("dropout period must be positive")
    return -math.log1p(-probability) / months


def survival_eval(model: PiecewiseExponential, t: float) -> SurvivalPoint:
    if t < 0:
        raise ValueError("time must be nonnegative")
    cum = float(model.cumulative_hazard(t))
    haz = float(model.hazard(t))
    surv = math.exp(-cum)
    return SurvivalPoint(haz, cum, surv, haz * surv)


@dataclass(frozen=True)
class UniformAccrual:
    """Uniform enrolment of ``n`` patients at ``rate`` patients/month.

    An infinite rate means every patient enters at time 0.
    """

    n: int
    rate: float

    def __post_init__(self):
        if self.n < 1:
            raise ValueError("n must be a positive integer")
        if not self.rate > 0:
            raise ValueError("accrual rate must be positive")

    @classmethod
    def from_duration(cls, n: int, duration: float) -> UniformAccrual:
        return cls(n, math.inf if duration == 0 else n / duration)

    @property
    def duration(self) -> float:
        return self.n / self.rate

    def cdf(self, t: ArrayLike) -> NDArray:
        t = np.asarray(t, dtype=float)
        r = self.duration
        if r == 0:
            return np.where(t >= 0, 1.0, 0.0)
        return np.clip(t / r, 0.0, 1.0)

    def density(self, t: ArrayLike) -> NDArray:
        t = np.asarray(t, dtype=float)
        r = self.duration
        return np.where((t >= 0) & (t <= r), 1.0 / r, 0.0)


@dataclass(frozen=True)
class ArmModel:
    label: str
    survival: PiecewiseExponential
    allocation_fraction: float

    def __post_init__(self):
        if self.label not in (EXPERIMENTAL, CONTROL):
            raise ValueError(f"unknown arm label {self.label!r}")
        if not 0 < self.allocation_fraction < 1:
            raise ValueError("allocation fraction must be in (0, 1)")


@functools.lru_cache(maxsize=64)
def _master_key(seed: int) -> int:
    return int(np.random.SeedSequence(seed).generate_state(1, np.uint64)[0])


def stream(seed: int, replicate: int, purpose: int) -> np.random.Generator:
    """Counter-based generator for one (replicate, purpose) pair.

    The Philox key is (hash(seed), replicate, purpose) and the i-th draw
    belongs to patient i, so a patient's uniforms do not depend on how many
    patients are drawn or in which order replicates run.
    """
    if replicate < 0 or replicate >= 2**62:
        raise ValueError("replicate index out of range")
    key = np.array([_master_key(seed), (replicate << 2) | purpose], dtype=np.uint64)
    return np.random.Generator(np.random.Philox(key=key))


def uniforms(rng: np.random.Generator, size: int) -> NDArray:
    """Uniform draws on (0, 1]."""
    return 1.0 - rng.random(size)


def sample_time(model: PiecewiseExponential, rng: np.random.Generator, size: int | None = None):
    u = uniforms(rng, 1 if size is None else size)
    t = model.quantile_from_survivor(u)
    return float(t[0]) if size is None else t


def sample_accrual(model: UniformAccrual, rng: np.random.Generator, size: int | None = None):
    u = rng.random(1 if size is None else size)
    t = u * model.duration
    return float(t[0]) if size is None else t
