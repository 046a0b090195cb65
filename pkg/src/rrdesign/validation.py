"""Cross-module invariant checks with measured values."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

from rrdesign import events, power as pw, simulate as sim, studio
from rrdesign.design import TrialDesign
from rrdesign.models import PiecewiseExponential


@dataclass(frozen=True)
class CheckResult:
    name: str
    measured: float
    threshold: str
    passed: bool


def check_event_ratio_limits(draws: int = 20, seed: int = 7) -> CheckResult:
    """Curve ratio at t=1e-4 and t=1e4 against the two analytic limits."""
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(draws):
        lam_c = rng.uniform(0.02, 0.3)
        hr = rng.uniform(0.3, 1.5)
        eta = rng.uniform(0.0, 0.05)
        phi = rng.uniform(0.5, 3.0)
        n = int(rng.integers(50, 1000))
        r = rng.uniform(1.0, 30.0)
        design = TrialDesign(PiecewiseExponential.exponential(lam_c), hr, n, n / r, phi, eta)
        short, long = events.event_ratio_limits(lam_c * hr, lam_c, eta, phi)
        for t, limit in ((1e-4, short), (1e4, long)):
            e, c = arm_curves_closed(design, t)
            worst = max(worst, abs(e / c / limit - 1))
    return CheckResult("event ratio limits (t->0, t->inf)", worst, "< 1e-3 relative", worst < 1e-3)


def arm_curves_closed(design: TrialDesign, t: float) -> tuple[float, float]:
    e, c = events.arm_inputs(design)
    return events.expected_events_closed_form(e, t), events.expected_events_closed_form(c, t)


def check_schoenfeld_rubinstein_identity() -> CheckResult:
    worst = 0.0
    for theta in (-0.7, -0.3, 0.2):
        for d in (40.0, 133.0, 631.0):
            s = pw.mu_schoenfeld(theta, d, 1.0).mu
            r = pw.mu_rubinstein(theta, d / 2, d / 2).mu
            worst = max(worst, abs(s - r))
    return CheckResult("mu_S = mu_R at balanced events", worst, "< 1e-12", worst < 1e-12)


def check_quadrature_closed_form() -> CheckResult:
    design = studio.checkmate017()
    worst = 0.0
    for inputs in events.arm_inputs(design):
        for t in (0.1, 1.0, 10.0, 100.0):
            a = events.expected_events_closed_form(inputs, t)
            b = events.expected_events_quadrature(inputs, t)
            worst = max(worst, abs(a - b) / a)
    return CheckResult("quadrature vs closed form", worst, "< 1e-6 relative", worst < 1e-6)


def check_rubinstein_balance() -> CheckResult:
    design = studio.checkmate017()
    sol = pw.optimal_rr(pw.ApproxMethod.RUBINSTEIN, design)
    dev = abs(sol.achieved_balance - 1)
    return CheckResult("Rubinstein optimum balances events", dev, "< 1e-6", dev < 1e-6)


def check_freedman_optimum() -> CheckResult:
    worst = 0.0
    for hr, expected in ((0.5, 2.0), (2 / 3, 1.5)):
        design = studio.build_grid_design(hr, 12.0, 0.7)
        worst = max(worst, abs(pw.optimal_rr(pw.ApproxMethod.FREEDMAN, design).phi_star - expected))
    return CheckResult("Freedman optimum = 1/HR", worst, "< 1e-9", worst < 1e-9)


def single_knot_control(ratio: float) -> PiecewiseExponential:
    base = math.log(2) / 12
    return PiecewiseExponential((base, base * ratio), (4.0,))


def single_knot_balances(
    hazard_ratios=(0.5, 0.6, 0.7, 0.8),
    event_patient_ratios=(0.5, 0.6, 0.7, 0.8),
    hazard_changes=(1 / 2, 2 / 3, 1.0, 3 / 2, 2.0),
) -> list[tuple[float, float, float, float, float]]:
    """(HR, d/n, hazard change, phi*, E_e/E_c at phi*) with phi* maximizing |mu_PE|."""
    out = []
    for hr in hazard_ratios:
        for ratio in event_patient_ratios:
            for change in hazard_changes:
                design = studio.build_grid_design(hr, None, ratio, control=single_knot_control(change))
                sol = pw.optimal_rr(pw.ApproxMethod.PIECEWISE, design)
                out.append((hr, ratio, change, sol.phi_star, sol.achieved_balance))
    return out


def check_single_knot_balance() -> CheckResult:
    rows = single_knot_balances()
    worst = max(abs(b - 1) for *_, b in rows)
    ok = all(0.97 < b < 1.03 for *_, b in rows)
    return CheckResult("single-knot mu_PE optimum event ratio", worst, "ratio in (0.97, 1.03)", ok)


def check_mle_identities(replicates: int = 5, seed: int = 11) -> CheckResult:
    """Control hazard and variance identities of the piecewise fit on simulated data."""
    design = studio.build_grid_design(0.7, 12.0, 0.7).replace(n=600)
    worst = 0.0
    for k in range(replicates):
        data = sim.simulate_trial(design, 300, k, seed)
        fit = pw.fit_piecewise_mle(data, ())
        d, r = fit.interval_events, fit.interval_exposure
        worst = max(worst, float(np.max(np.abs(fit.lambda_hat - d[0] / r[0]))))
        worst = max(worst, float(np.max(np.abs(fit.psi_hat * fit.lambda_hat * r[1] - d[1]))))
        worst = max(worst, abs(fit.var_log_psi - fit.information_variance()) / fit.var_log_psi)
    return CheckResult("exponential MLE identities", worst, "< 1e-10", worst < 1e-10)


def check_schoenfeld_grid_formula() -> CheckResult:
    bad = 0
    for hr in (0.5, 0.6, 0.7, 0.8):
        direct = math.ceil((1.96 + 0.84) ** 2 / (0.5 * 0.5 * math.log(hr) ** 2))
        design = studio.build_grid_design(hr, 12.0, 0.5)
        bad += pw.required_events(pw.ApproxMethod.SCHOENFELD, design, z_digits=2) != direct
    return CheckResult("Schoenfeld events vs 1.96+0.84 ceiling", bad, "0 mismatches", bad == 0)


CHECKS: dict[str, Callable[[], CheckResult]] = {
    "limits": check_event_ratio_limits,
    "identity": check_schoenfeld_rubinstein_identity,
    "quadrature": check_quadrature_closed_form,
    "balance": check_rubinstein_balance,
    "freedman": check_freedman_optimum,
    "single_knot": check_single_knot_balance,
    "mle": check_mle_identities,
    "schoenfeld_grid": check_schoenfeld_grid_formula,
}


def run_checks(names=None) -> list[CheckResult]:
    names = list(CHECKS) if names is None else names
    return [CHECKS[name]() for name in names]
