"""The design tuple shared by every analysis."""

from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass

from rrdesign.models import (
    CONTROL,
    EXPERIMENTAL,
    ArmModel,
    PiecewiseExponential,
    UniformAccrual,
)


@dataclass(frozen=True)
class TrialDesign:
    """Two-arm event-driven survival trial under proportional hazards.

    Attributes:
        control: hazard curve of the control arm.
        hazard_ratio: experimental / control hazard, constant over time.
        n: total number of randomized patients.
        accrual_rate: patients per month; ``math.inf`` enrols everyone at time 0.
        phi: randomization ratio phi:1 (experimental:control).
        dropout_rate: exponential dropout hazard per month (0 for none).
        alpha: one-sided significance level.
        target_power: power the design aims for.
        d: target number of events, if fixed.
    """

    control: PiecewiseExponential
    hazard_ratio: float
    n: int
    accrual_rate: float
    phi: float = 1.0
    dropout_rate: float = 0.0
    alpha: float = 0.025
    target_power: float = 0.8
    d: int | None = None

    def __post_init__(self):
        if not self.hazard_ratio > 0:
            raise ValueError("hazard ratio must be positive")
        if not self.phi > 0:
            raise ValueError("randomization ratio must be positive")
        if self.n < 1:
            raise ValueError("n must be a positive integer")
        if not self.accrual_rate > 0:
            raise ValueError("accrual rate must be positive")
        if self.dropout_rate < 0 or not math.isfinite(self.dropout_rate):
            raise ValueError("dropout rate must be finite and nonnegative")
        if not 0 < self.alpha < 0.5:
            raise ValueError("one-sided alpha must be in (0, 0.5)")
        if not 0 < self.target_power < 1:
            raise ValueError("target power must be in (0, 1)")
        if self.d is not None and not 0 < self.d <= self.n:
            raise ValueError("event-patient ratio d/n must lie in (0, 1]")

    @property
    def theta(self) -> float:
        return math.log(self.hazard_ratio)

    @property
    def pi(self) -> float:
        return self.phi / (1.0 + self.phi)

    @property
    def experimental(self) -> PiecewiseExponential:
        return self.control.scaled(self.hazard_ratio)

    @property
    def accrual(self) -> UniformAccrual:
        return UniformAccrual(self.n, self.accrual_rate)

    @property
    def accrual_duration(self) -> float:
        return self.n / self.accrual_rate

    @property
    def n_experimental(self) -> float:
        """Expected experimental-arm size n*pi (real valued)."""
        return self.n * self.pi

    @property
    def n_control(self) -> float:
        return self.n - self.n_experimental

    def arm_counts(self) -> tuple[int, int]:
        """Integer (experimental, control) sizes used by the simulator."""
        n_e = int(round(self.n * self.pi))
        n_e = min(max(n_e, 0), self.n)
        return n_e, self.n - n_e

    def arms(self) -> tuple[ArmModel, ArmModel]:
        return (
            ArmModel(EXPERIMENTAL, self.experimental, self.pi),
            ArmModel(CONTROL, self.control, 1.0 - self.pi),
        )

    def replace(self, **changes) -> TrialDesign:
        return dataclasses.replace(self, **changes)

    @classmethod
    def with_accrual_duration(cls, duration: float, **kwargs) -> TrialDesign:
        n = kwargs["n"]
        rate = math.inf if duration == 0 else n / duration
        return cls(accrual_rate=rate, **kwargs)


def phi_from_pi(pi: float) -> float:
    return pi / (1.0 - pi)


def pi_from_phi(phi: float) -> float:
    return phi / (1.0 + phi)
