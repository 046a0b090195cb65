"""Acceptance criteria 1-10, one test and one PASS/FAIL line each.

Run alone with ``pytest tests/test_acceptance.py -v``; the summary lines are
printed at the end of the session.
"""

import math
import time

import numpy as np
import pytest

from rrdesign import events, power as pw, simulate as sim, studio, validation
from rrdesign.power import ApproxMethod
from rrdesign.studio import EventSource, SimulationSettings

SEED = 2023
RESULTS: list[str] = []


def record(number: int, title: str, failures: list[str], detail: str = "") -> None:
    status = "PASS" if not failures else "FAIL"
    line = f"[{status}] criterion {number:2d}: {title}"
    if detail:
        line += f" | {detail}"
    if failures:
        line += " | failed: " + "; ".join(failures)
    RESULTS.append(line)
    print(line)
    assert not failures, line


def within(name: str, value: float, target: float, tol: float, failures: list[str]) -> str:
    if value is None or not abs(value - target) <= tol:
        failures.append(f"{name}={value:.4g} (target {target}±{tol})")
    return f"{name}={value:.4g}"


# --------------------------------------------------------------------------


def test_criterion_01_checkmate017_comparison():
    base = studio.checkmate017()
    settings = SimulationSettings(10_000, SEED)
    failures: list[str] = []
    calibrated = sim.calibrate_events(base.replace(d=None), replicates=10_000, seed=SEED).d
    rows = studio.compare_designs(base, (1.5, 2.0), EventSource.EMPIRICAL, settings, simulate_durations=True)
    notes = [within("d(1:1)", calibrated, 133, 2, failures)]
    notes.append(within("d(3:2)", rows[1].d, 134, 2, failures))
    notes.append(within("d(2:1)", rows[4].d, 142, 2, failures))
    for row, target in zip(rows, (21.7, 23.0, 21.7, 21.7, 26.6, 22.2, 21.7)):
        notes.append(within(f"T[{row.label}]", row.duration, target, 0.3, failures))
    notes.append(within("r[Alt 2]", rows[2].accrual_duration, 6.1, 0.2, failures))
    notes.append(within("n[Alt 3]", rows[3].n, 196, 2, failures))
    notes.append(within("n[Alt 6]", rows[6].n, 210, 3, failures))
    if rows[5].feasible or rows[5].accrual_duration != 0:
        failures.append("Alt 5 not reported infeasible")
    record(1, "Checkmate-017 design comparison (empirical, 10^4 replicates)", failures, ", ".join(notes))


def test_criterion_02_required_events():
    base = studio.checkmate017()
    start = time.perf_counter()
    got = {
        (m, phi): pw.required_events(m, base.replace(phi=phi))
        for m in (ApproxMethod.RUBINSTEIN, ApproxMethod.SCHOENFELD)
        for phi in (1.5, 2.0)
    }
    elapsed = time.perf_counter() - start
    expected = {
        (ApproxMethod.RUBINSTEIN, 1.5): 134,
        (ApproxMethod.RUBINSTEIN, 2.0): 141,
        (ApproxMethod.SCHOENFELD, 1.5): 138,
        (ApproxMethod.SCHOENFELD, 2.0): 149,
    }
    failures = [f"{m.value}@{phi}: {got[(m, phi)]} != {v}" for (m, phi), v in expected.items() if got[(m, phi)] != v]
    if elapsed >= 1.0:
        failures.append(f"took {elapsed:.2f}s")
    detail = ", ".join(f"{m.value}({phi:g})={d}" for (m, phi), d in got.items()) + f", {elapsed * 1000:.0f} ms"
    record(2, "required events without simulation", failures, detail)


BIAS_CELLS = [(0.5, 0.5, 2.0), (0.5, 0.5, 1.0), (0.6, 0.7, 1.5), (0.7, 0.5, 2.0), (0.8, 0.8, 1.0), (0.8, 0.6, 2.0)]


def test_criterion_03_bias_spot_checks():
    failures: list[str] = []
    notes = []
    for hr, ratio, rr in BIAS_CELLS:
        design = studio.build_grid_design(hr, 12.0, ratio).replace(phi=rr)
        est = sim.empirical_power(design, replicates=5000, seed=SEED)
        bias_s = pw.power("S", design).power - est.power
        bias_r = pw.power("R", design).power - est.power
        se = est.mc_se
        cell = f"HR={hr},d/n={ratio},RR={rr}"
        notes.append(f"{cell}: E={est.power:.4f} biasS={bias_s:+.4f} biasR={bias_r:+.4f} se={se:.4f}")
        if abs(bias_r) > 0.01 + 3 * se:
            failures.append(f"{cell} Rubinstein |bias| {abs(bias_r):.4f}")
        if rr == 2.0 and hr == 0.5 and ratio == 0.5 and bias_s > -0.04 + 3 * se:
            failures.append(f"{cell} Schoenfeld bias {bias_s:.4f} not <= -4%")
        if rr == 1.0 and abs(bias_s) > 3 * se:
            failures.append(f"{cell} Schoenfeld 1:1 |bias| {abs(bias_s):.4f}")
    record(3, "bias-grid spot checks (5000 replicates per cell)", failures, "; ".join(notes))


def test_criterion_04_constant_schoenfeld_difference():
    diffs = []
    for hr in (0.5, 0.6, 0.7, 0.8):
        for ratio in (0.5, 0.6, 0.7, 0.8):
            base = studio.build_grid_design(hr, 12.0, ratio)
            diffs.append(pw.power("S", base.replace(phi=2.0)).power - pw.power("S", base).power)
    failures = [f"{d:+.4f}" for d in diffs if abs(d + 0.048) > 0.001]
    record(4, "Schoenfeld 2:1 minus 1:1 power", failures, f"range [{min(diffs):+.4f}, {max(diffs):+.4f}]")


def test_criterion_05_analytic_optima():
    failures: list[str] = []
    base = studio.checkmate017()
    s = pw.optimal_rr("S", base).phi_star
    if s != 1.0:
        failures.append(f"Schoenfeld phi*={s}")
    for hr, expected in ((0.5, 2.0), (2 / 3, 1.5)):
        f = pw.optimal_rr("F", studio.build_grid_design(hr, 12.0, 0.6)).phi_star
        if abs(f - expected) > 1e-9:
            failures.append(f"Freedman HR={hr:.3f} phi*={f}")
    sol = pw.optimal_rr("R", base)
    if abs(sol.achieved_balance - 1) >= 1e-6:
        failures.append(f"balance {sol.achieved_balance}")
    grid = np.round(np.arange(0.5, 3.0001, 0.01), 10)
    mus = [pw.approximate_mu("R", base.replace(phi=float(p))).mu for p in grid]
    grid_best = float(grid[int(np.argmin(mus))])
    if abs(grid_best - sol.phi_star) > 0.01:
        failures.append(f"grid minimum {grid_best} vs phi* {sol.phi_star}")
    detail = f"S=1, F=1/HR, R phi*={sol.phi_star:.4f} balance-1={sol.achieved_balance - 1:.1e}, grid min {grid_best}"
    record(5, "analytic optima", failures, detail)


def test_criterion_06_limits():
    res = validation.check_event_ratio_limits(draws=20, seed=SEED)
    record(6, "event-ratio limits at t=1e-4 and 1e4", [] if res.passed else [f"{res.measured:.2e}"],
           f"worst relative error {res.measured:.2e}")


def test_criterion_07_single_knot_balance():
    rows = validation.single_knot_balances()
    ratios = [b for *_, b in rows]
    failures = [f"HR={hr},d/n={r},change={c:.3g}: {b:.4f}" for hr, r, c, _, b in rows if not 0.97 < b < 1.03]
    record(7, "single-knot optimum event ratio in (0.97, 1.03)", failures,
           f"{len(rows)} cells, range [{min(ratios):.4f}, {max(ratios):.4f}]")


def test_criterion_08_mle_identities():
    failures: list[str] = []
    worst = {"lambda": 0.0, "psi": 0.0, "var": 0.0}
    knot = validation.single_knot_control(1.5)
    scenarios = [
        ("J=1", studio.build_grid_design(0.7, 12.0, 0.7), ()),
        ("J=2", studio.build_grid_design(0.7, None, 0.7, control=knot), (4.0,)),
    ]
    for label, design, knots in scenarios:
        for k in range(20):
            fit = pw.fit_piecewise_mle(sim.simulate_trial(design, design.d, k, SEED), knots)
            d, r = fit.interval_events, fit.interval_exposure
            e_lam = float(np.max(np.abs(fit.lambda_hat - d[0] / r[0])))
            e_psi = float(np.max(np.abs(fit.psi_hat * fit.lambda_hat * r[1] - d[1])))
            wald = 1.0 / math.fsum(1.0 / (1.0 / a + 1.0 / b) for a, b in zip(d[1], d[0]) if a > 0 and b > 0)
            e_var = abs(fit.var_log_psi - wald)
            worst = {"lambda": max(worst["lambda"], e_lam), "psi": max(worst["psi"], e_psi), "var": max(worst["var"], e_var)}
            for name, err in (("lambda", e_lam), ("psi*lambda*R1=D1", e_psi), ("variance", e_var)):
                if err > 1e-10:
                    failures.append(f"{label} replicate {k} {name} off by {err:.3g}")
    detail = ", ".join(f"max |{k}| err {v:.2e}" for k, v in worst.items())
    shown = failures[:3] + ([f"... {len(failures) - 3} more"] if len(failures) > 3 else [])
    RESULTS_DETAIL = detail
    record(8, "piecewise MLE identities (J=1 and J=2, 20 datasets each)", shown, RESULTS_DETAIL)


def _brute_force_logrank(time, event, arm):
    num = var = 0.0
    for t in sorted({time[i] for i in range(len(time)) if event[i]}):
        risk = [i for i in range(len(time)) if time[i] >= t]
        dead = [i for i in risk if time[i] == t and event[i]]
        n, n1, d = len(risk), sum(arm[i] for i in risk), len(dead)
        num += sum(arm[i] for i in dead) - d * n1 / n
        if n > 1:
            var += d * n1 / n * (1 - n1 / n) * (n - d) / (n - 1)
    return num / math.sqrt(var)


def test_criterion_09_oracle_equivalence():
    rng = np.random.default_rng(SEED)
    worst_z, checked = 0.0, 0
    while checked < 100:
        n = int(rng.integers(4, 31))
        time = rng.integers(1, 12, n).astype(float) if checked % 2 else rng.exponential(6.0, n)
        event = (rng.random(n) < 0.7).astype(int)
        arm = (rng.random(n) < 0.5).astype(int)
        if event.sum() == 0 or arm.sum() in (0, n):
            continue
        try:
            z = sim.logrank_z(time, event, arm)
        except Exception:
            continue
        worst_z = max(worst_z, abs(z - _brute_force_logrank(time, event, arm)))
        checked += 1
    quad = validation.check_quadrature_closed_form()
    failures = []
    if worst_z > 1e-12:
        failures.append(f"logrank max diff {worst_z:.2e}")
    if not quad.passed:
        failures.append(f"quadrature rel diff {quad.measured:.2e}")
    record(9, "logrank and quadrature oracles", failures,
           f"logrank max |dZ| {worst_z:.1e} over 100 datasets, quadrature rel err {quad.measured:.1e}")


def test_criterion_10_null_calibration():
    design = studio.checkmate017().replace(hazard_ratio=1.0)
    est = sim.empirical_power(design, replicates=10_000, seed=SEED)
    se = math.sqrt(design.alpha * (1 - design.alpha) / est.replicates)
    gap = abs(est.power - design.alpha)
    failures = [] if gap <= 3 * se else [f"|{est.power:.4f} - 0.025| = {gap:.4f} > {3 * se:.4f}"]
    record(10, "null rejection rate within 3 MC SE of alpha", failures,
           f"rate {est.power:.4f}, MC SE {se:.4f}, {gap / se:.2f} SE from alpha")


if __name__ == "__main__":
    raise SystemExit(pytest.main([__file__, "-q"]))
