"""Normal approximations to the logrank statistic and the solvers built on them.

Each approximation gives the mean ``mu`` of a unit-variance normal; power at
one-sided level alpha is Phi(|mu| - z_{1-alpha}).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum
from typing import NamedTuple, Sequence

import numpy as np
from scipy import optimize, special

from rrdesign import events
from rrdesign.design import TrialDesign
from rrdesign.errors import BracketError, DegenerateFit, Unreachable


class ApproxMethod(str, Enum):
    SCHOENFELD = "S"
    FREEDMAN = "F"
    RUBINSTEIN = "R"
    PIECEWISE = "PE"
    EMPIRICAL = "E"

    @classmethod
    def parse(cls, value: str | ApproxMethod) -> ApproxMethod:
        if isinstance(value, cls):
            return value
        key = str(value).strip()
        for m in cls:
            if key.upper() == m.value or key.lower() == m.name.lower():
                return m
        aliases = {"piecewisemle": cls.PIECEWISE, "pe": cls.PIECEWISE}
        if key.lower() in aliases:
            return aliases[key.lower()]
        raise ValueError(f"unknown approximation method {value!r}")


@dataclass(frozen=True)
class MuValue:
    mu: float
    method: ApproxMethod
    components: tuple[tuple[float, ...], tuple[float, ...]] | None = None

    def __float__(self) -> float:
        return self.mu


@dataclass(frozen=True)
class PowerResult:
    method: ApproxMethod
    mu: float
    power: float
    d: int
    duration: float | None = None
    expected_events: tuple[float, float] | None = None


@dataclass(frozen=True)
class AllocationSolution:
    phi_star: float
    achieved_balance: float
    method: ApproxMethod


def z_quantile(p: float) -> float:
    """Standard normal quantile."""
    return float(special.ndtri(p))


def normal_cdf(x: float) -> float:
    return float(special.ndtr(x))


# ---------------------------------------------------------------------------
# the four means


def mu_schoenfeld(theta: float, d: float, phi: float) -> MuValue:
    _check_positive(d=d, phi=phi)
    return MuValue(theta / (1.0 + phi) * math.sqrt(d * phi), ApproxMethod.SCHOENFELD)


def mu_freedman(theta: float, d: float, phi: float) -> MuValue:
    _check_positive(d=d, phi=phi)
    psi = math.exp(theta)
    return MuValue((psi - 1.0) / (1.0 + psi * phi) * math.sqrt(d * phi), ApproxMethod.FREEDMAN)


def mu_rubinstein(theta: float, expected_e: float, expected_c: float) -> MuValue:
    _check_positive(expected_e=expected_e, expected_c=expected_c)
    return MuValue(theta / math.sqrt(1.0 / expected_e + 1.0 / expected_c), ApproxMethod.RUBINSTEIN)


def _harmonic_information(d_e: float, d_c: float) -> float:
    """(1/d_e + 1/d_c)^{-1}, zero when either count is zero."""
    if d_e <= 0 or d_c <= 0:
        return 0.0
    return d_e * d_c / (d_e + d_c)


def mu_piecewise(theta: float, d_e_by_interval: Sequence[float], d_c_by_interval: Sequence[float]) -> MuValue:
    d_e = [float(x) for x in d_e_by_interval]
    d_c = [float(x) for x in d_c_by_interval]
    if len(d_e) != len(d_c):
        raise ValueError("both arms need the same number of intervals")
    if any(x < 0 for x in d_e + d_c):
        raise ValueError("event counts must be nonnegative")
    info = math.fsum(_harmonic_information(a, b) for a, b in zip(d_e, d_c))
    if info == 0:
        raise ValueError("no interval has events in both arms")
    return MuValue(theta * math.sqrt(info), ApproxMethod.PIECEWISE, (tuple(d_e), tuple(d_c)))


def power_from_mu(mu: MuValue | float, alpha_one_sided: float) -> float:
    if not 0 < alpha_one_sided < 0.5:
        raise ValueError("one-sided alpha must be in (0, 0.5)")
    return normal_cdf(abs(float(mu)) - z_quantile(1.0 - alpha_one_sided))


def _check_positive(**values: float) -> None:
    for name, v in values.items():
        if not v > 0:
            raise ValueError(f"{name} must be positive")


# ---------------------------------------------------------------------------
# design-level evaluation


def approximate_mu(method: ApproxMethod | str, design: TrialDesign, d: float | None = None) -> MuValue:
    """Mean of the logrank statistic for ``design`` analysed at ``d`` events."""
    method = ApproxMethod.parse(method)
    d = _events(design, d)
    if method is ApproxMethod.SCHOENFELD:
        return mu_schoenfeld(design.theta, d, design.phi)
    if method is ApproxMethod.FREEDMAN:
        return mu_freedman(design.theta, d, design.phi)
    if method is ApproxMethod.RUBINSTEIN:
        _, e, c = events.events_at_duration(design, d)
        return mu_rubinstein(design.theta, e, c)
    if method is ApproxMethod.PIECEWISE:
        d_e, d_c = expected_events_by_interval(design, d)
        return mu_piecewise(design.theta, d_e, d_c)
    raise ValueError("empirical power needs the simulator (rrdesign.simulate.empirical_power)")


def expected_events_by_interval(design: TrialDesign, d: float) -> tuple[np.ndarray, np.ndarray]:
    """Expected events per arm split by follow-up interval of the control model, at t_d."""
    t_d = events.trial_duration(design, d)
    e, c = events.arm_inputs(design)
    return events.expected_events_by_interval(e, t_d), events.expected_events_by_interval(c, t_d)


def power(method: ApproxMethod | str, design: TrialDesign, d: float | None = None) -> PowerResult:
    method = ApproxMethod.parse(method)
    d = _events(design, d)
    mu = approximate_mu(method, design, d)
    duration = expected = None
    if method in (ApproxMethod.RUBINSTEIN, ApproxMethod.PIECEWISE):
        duration, e, c = events.events_at_duration(design, d)
        expected = (e, c)
    return PowerResult(method, mu.mu, power_from_mu(mu, design.alpha), int(d), duration, expected)


def _events(design: TrialDesign, d: float | None) -> float:
    if d is None:
        if design.d is None:
            raise ValueError("design has no target event count")
        return design.d
    return d


# ---------------------------------------------------------------------------
# required events


def _z_sum(alpha: float, target_power: float, z_digits: int | None) -> float:
    za = z_quantile(1.0 - alpha)
    zb = z_quantile(target_power)
    if z_digits is not None:
        za, zb = round(za, z_digits), round(zb, z_digits)
    return za + zb


def schoenfeld_events(theta: float, phi: float, alpha: float, target_power: float, z_digits: int | None = None) -> int:
    """Smallest d with Schoenfeld power >= target."""
    if theta == 0:
        raise ValueError("no finite event count detects a null effect")
    k = _z_sum(alpha, target_power, z_digits) ** 2
    return math.ceil(k * (1.0 + phi) ** 2 / (phi * theta**2))


def freedman_events(theta: float, phi: float, alpha: float, target_power: float, z_digits: int | None = None) -> int:
    if theta == 0:
        raise ValueError("no finite event count detects a null effect")
    psi = math.exp(theta)
    k = _z_sum(alpha, target_power, z_digits) ** 2
    return math.ceil(k * (1.0 + psi * phi) ** 2 / (phi * (psi - 1.0) ** 2))


def max_reachable_events(design: TrialDesign) -> int:
    """Largest integer event count strictly below E(D(infinity))."""
    limit = events.asymptotic_events(design) * (1 - 1e-9)
    return math.ceil(limit) - 1


def required_events(
    method: ApproxMethod | str,
    design: TrialDesign,
    target_power: float | None = None,
    z_digits: int | None = None,
) -> int:
    """Smallest integer event count whose approximate power reaches the target.

    ``z_digits`` rounds the normal quantiles (2 gives the familiar 1.96 + 0.84).
    """
    method = ApproxMethod.parse(method)
    target = design.target_power if target_power is None else target_power
    if not design.alpha < target < 1:
        raise ValueError("target power must lie in (alpha, 1)")
    d_max = max_reachable_events(design)
    if method is ApproxMethod.SCHOENFELD:
        d = schoenfeld_events(design.theta, design.phi, design.alpha, target, z_digits)
    elif method is ApproxMethod.FREEDMAN:
        d = freedman_events(design.theta, design.phi, design.alpha, target, z_digits)
    elif method in (ApproxMethod.RUBINSTEIN, ApproxMethod.PIECEWISE):
        d = _search_events(method, design, target, d_max)
    else:
        raise ValueError("empirical event sizes come from rrdesign.simulate.calibrate_events")
    if d > d_max:
        raise Unreachable(d, events.asymptotic_events(design))
    return d


def _search_events(method: ApproxMethod, design: TrialDesign, target: float, d_max: int) -> int:
    if d_max < 1:
        raise Unreachable(1, events.asymptotic_events(design))

    def reaches(d: int) -> bool:
        return power_from_mu(approximate_mu(method, design, d), design.alpha) >= target

    d = min(max(schoenfeld_events(design.theta, design.phi, design.alpha, target), 1), d_max)
    if reaches(d):
        while d > 1 and reaches(d - 1):
            d -= 1
        return d
    while not reaches(d):
        if d >= d_max:
            raise Unreachable(d + 1, events.asymptotic_events(design))
        d += 1
    return d


# ---------------------------------------------------------------------------
# optimal randomization ratio


def event_balance(design: TrialDesign, d: float, phi: float) -> float:
    """E(D_e(t_d)) / E(D_c(t_d)) at randomization ratio ``phi``."""
    _, e, c = events.events_at_duration(design.replace(phi=phi), d)
    return e / c


def optimal_rr(
    method: ApproxMethod | str,
    design: TrialDesign,
    d: float | None = None,
    bracket: tuple[float, float] = (0.2, 5.0),
) -> AllocationSolution:
    method = ApproxMethod.parse(method)
    d = _events(design, d)
    if method is ApproxMethod.SCHOENFELD:
        phi = 1.0
    elif method is ApproxMethod.FREEDMAN:
        phi = 1.0 / design.hazard_ratio
    elif method is ApproxMethod.RUBINSTEIN:
        phi = _balance_root(design, d, bracket)
    elif method is ApproxMethod.PIECEWISE:
        phi = _piecewise_argmax(design, d, bracket)
    else:
        raise ValueError("empirical optimum needs a simulated power curve")
    return AllocationSolution(phi, event_balance(design, d, phi), method)


def _balance_root(design: TrialDesign, d: float, bracket: tuple[float, float]) -> float:
    def log_balance(log_phi: float) -> float:
        return math.log(event_balance(design, d, math.exp(log_phi)))

    lo, hi = math.log(bracket[0]), math.log(bracket[1])
    f_lo, f_hi = log_balance(lo), log_balance(hi)
    for _ in range(4):
        if f_lo <= 0 <= f_hi:
            break
        if f_lo > 0:
            lo -= math.log(2.0)
            f_lo = log_balance(lo)
        if f_hi < 0:
            hi += math.log(2.0)
            f_hi = log_balance(hi)
    if not f_lo <= 0 <= f_hi:
        raise BracketError(
            "event balance does not cross 1",
            (math.exp(lo), math.exp(f_lo)),
            (math.exp(hi), math.exp(f_hi)),
        )
    if f_lo == 0:
        return math.exp(lo)
    return math.exp(optimize.brentq(log_balance, lo, hi, xtol=1e-13, rtol=4 * np.finfo(float).eps))


def _piecewise_argmax(design: TrialDesign, d: float, bracket: tuple[float, float]) -> float:
    def neg_abs_mu(log_phi: float) -> float:
        return -abs(approximate_mu(ApproxMethod.PIECEWISE, design.replace(phi=math.exp(log_phi)), d).mu)

    lo, hi = math.log(bracket[0]), math.log(bracket[1])
    res = optimize.minimize_scalar(neg_abs_mu, bounds=(lo, hi), method="bounded", options={"xatol": 1e-9})
    return math.exp(res.x)


# ---------------------------------------------------------------------------
# piecewise-exponential MLE


@dataclass(frozen=True)
class MleFit:
    """Piecewise-exponential proportional-hazards fit.

    Rows of ``interval_events`` and ``interval_exposure`` are (control,
    experimental); columns are the retained follow-up intervals.
    """

    psi_hat: float
    lambda_hat: np.ndarray
    var_log_psi: float
    interval_events: np.ndarray
    interval_exposure: np.ndarray
    interval_starts: np.ndarray = field(repr=False)

    @property
    def wald_z(self) -> float:
        return math.log(self.psi_hat) / math.sqrt(self.var_log_psi)

    def information_variance(self) -> float:
        """Var(log psi) from the inverse observed information at the fit."""
        d = self.interval_events
        r = self.interval_exposure
        lam = self.lambda_hat
        d1, dj = d[1].sum(), d.sum(axis=0)
        keep = dj > 0
        i11 = d1 / self.psi_hat**2
        schur = i11 - np.sum(lam[keep] ** 2 * r[1, keep] ** 2 / dj[keep])
        return 1.0 / schur / self.psi_hat**2


def interval_tallies(time, event, arm, knots: Sequence[float]) -> tuple[np.ndarray, np.ndarray]:
    """Event counts D_ij and exposure R_ij, arm i in (control, experimental)."""
    time = np.asarray(time, dtype=float)
    event = np.asarray(event).astype(bool)
    arm = np.asarray(arm).astype(int)
    edges = np.concatenate([[0.0], np.asarray(knots, dtype=float), [np.inf]])
    j = np.searchsorted(edges[1:-1], time, side="right")
    exposure = np.clip(np.minimum(time[:, None], edges[None, 1:]) - edges[None, :-1], 0.0, None)
    n_int = len(edges) - 1
    d = np.zeros((2, n_int))
    r = np.zeros((2, n_int))
    for i in (0, 1):
        mask = arm == i
        d[i] = np.bincount(j[mask & event], minlength=n_int)
        r[i] = exposure[mask].sum(axis=0)
    return d, r


def fit_piecewise_mle(dataset, knots: Sequence[float] = ()) -> MleFit:
    """Fit control hazards and the hazard ratio from observed (arm, time, event).

    ``dataset`` needs array attributes ``arm`` (1 experimental, 0 control),
    ``time`` and ``event``.
    """
    d, r = interval_tallies(dataset.time, dataset.event, dataset.arm, knots)
    if d[0].sum() == 0 or d[1].sum() == 0:
        raise DegenerateFit("hazard ratio undefined: an arm has no events")
    starts = np.concatenate([[0.0], np.asarray(knots, dtype=float)])
    keep = r.sum(axis=0) > 0
    d, r, starts = d[:, keep], r[:, keep], starts[keep]
    lam = np.divide(d[0], r[0], out=np.zeros_like(d[0]), where=r[0] > 0)
    denominator = float(np.sum(lam * r[1]))
    if denominator == 0:
        raise DegenerateFit("no interval carries both control events and experimental exposure")
    psi = d[1].sum() / denominator
    info = math.fsum(_harmonic_information(a, b) for a, b in zip(d[1], d[0]))
    if info == 0:
        raise DegenerateFit("no interval has events in both arms")
    return MleFit(psi, lam, 1.0 / info, d, r, starts)


# ---------------------------------------------------------------------------
# baseline imbalance


class ImbalanceEquivalent(NamedTuple):
    n_equivalent: float
    variance_factor: float


def baseline_imbalance_equivalent_n(n_pi: float, pi: float) -> ImbalanceEquivalent:
    """1:1 sample size with the same baseline-difference variance as ``n_pi`` at ``pi``.

    ``variance_factor`` is Var(mean_1 - mean_0) in units of the covariate's
    sigma, 1 / (pi (1 - pi) n_pi).
    """
    if not 0 < pi < 1:
        raise ValueError("allocation fraction must be in (0, 1)")
    if not n_pi > 0:
        raise ValueError("sample size must be positive")
    return ImbalanceEquivalent(n_pi * pi * (1 - pi) / 0.25, 1.0 / (pi * (1 - pi) * n_pi))
