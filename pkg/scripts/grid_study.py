"""Full-grid study: bias, power differences, optimal ratios and edge-case comparisons.

Writes into --out (default results/):
    bias_grid.csv          bias of S/F/R against simulation, HR x d/n x RR
    power_diff.csv         power at 2:1 (and 3:2) minus 1:1 per method
    optimal_rr_curve.csv   power versus phi, simulated and Rubinstein, d/n = 0.7
    optimal_rr.csv         Rubinstein optimum (balanced events) per scenario
    edge_cases.csv         edge-case comparison over HR x CM x d/n x RR

Bias and power-difference grids use 5000 replicates per cell and the
optimal-ratio curves 10000. Expect a long run on one core; --jobs spreads
simulation chunks over processes.
"""

import argparse
import csv
import math
import time
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from rrdesign import power as pw, simulate as sim, studio
from rrdesign.studio import SimulationSettings

METHODS = ("S", "F", "R")


def write(path: Path, rows: list[dict]) -> None:
    fields = list(rows[0])
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=fields, lineterminator="\n")
        w.writeheader()
        for row in rows:
            w.writerow({k: (f"{v:.6g}" if isinstance(v, float) else v) for k, v in row.items()})


def bias_cell(args) -> list[dict]:
    hr, ratio, rr, replicates, seed = args
    design = studio.build_grid_design(hr, 12.0, ratio).replace(phi=rr)
    est = sim.empirical_power(design, replicates=replicates, seed=seed)
    rows = []
    for m in METHODS:
        p = pw.power(m, design).power
        rows.append(
            {"hr": hr, "event_patient_ratio": ratio, "rr": rr, "n": design.n, "d": design.d, "method": m,
             "power": p, "empirical_power": est.power, "mc_se": est.mc_se, "bias": p - est.power}
        )
    return rows


def bias_and_power_diff(out: Path, ratios, replicates: int, seed: int, jobs: int) -> None:
    tasks = [(hr, r, rr, replicates, seed) for hr in (0.5, 0.6, 0.7, 0.8) for r in ratios for rr in (1.0, 1.5, 2.0)]
    if jobs > 1:
        with ProcessPoolExecutor(jobs) as pool:
            cells = list(pool.map(bias_cell, tasks))
    else:
        cells = [bias_cell(t) for t in tasks]
    rows = [row for cell in cells for row in cell]
    write(out / "bias_grid.csv", rows)

    by_key = {(r["hr"], r["event_patient_ratio"], r["rr"], r["method"]): r for r in rows}
    diffs = []
    for hr in (0.5, 0.6, 0.7, 0.8):
        for ratio in ratios:
            for rr in (1.5, 2.0):
                base = {m: by_key[(hr, ratio, 1.0, m)] for m in METHODS}
                alt = {m: by_key[(hr, ratio, rr, m)] for m in METHODS}
                row = {"hr": hr, "event_patient_ratio": ratio, "rr": rr}
                for m in METHODS:
                    row[f"diff_{m}"] = alt[m]["power"] - base[m]["power"]
                row["diff_E"] = alt["S"]["empirical_power"] - base["S"]["empirical_power"]
                diffs.append(row)
    write(out / "power_diff.csv", diffs)


def optimal_ratio_curves(out: Path, replicates: int, seed: int, jobs: int) -> None:
    phis = np.round(np.arange(0.5, 3.0001, 0.1), 10)
    curve, optima = [], []
    for hr in (0.5, 0.6, 0.7, 0.8):
        base = studio.build_grid_design(hr, 12.0, 0.7)
        for phi in phis:
            design = base.replace(phi=float(phi))
            est = sim.empirical_power(design, replicates=replicates, seed=seed, jobs=jobs)
            curve.append(
                {"hr": hr, "phi": float(phi), "power_rubinstein": pw.power("R", design).power,
                 "power_empirical": est.power, "mc_se": est.mc_se}
            )
        sol = pw.optimal_rr("R", base)
        optima.append(
            {"hr": hr, "phi_star": sol.phi_star, "balance": sol.achieved_balance,
             "power_at_phi_star": pw.power("R", base.replace(phi=sol.phi_star)).power,
             "power_at_1to1": pw.power("R", base).power}
        )
    write(out / "optimal_rr_curve.csv", curve)
    write(out / "optimal_rr.csv", optima)


def edge_case_tables(out: Path, source: str, replicates: int, seed: int) -> None:
    rows = studio.summarize_grid(phis=(1.5, 2.0), source=source, settings=SimulationSettings(replicates, seed))
    for row in rows:
        for key, value in row.items():
            if isinstance(value, float) and math.isinf(value):
                row[key] = "inf"
    write(out / "edge_cases.csv", rows)


def main() -> None:
    parser = argparse.ArgumentParser(description=__doc__.split("\n")[0])
    parser.add_argument("--out", default="results")
    parser.add_argument("--seed", type=int, default=2023)
    parser.add_argument("--jobs", type=int, default=1)
    parser.add_argument("--ratio-step", type=float, default=0.05, help="d/n spacing for the bias and power-difference grids")
    parser.add_argument("--table-source", default="rubinstein", choices=["rubinstein", "schoenfeld", "empirical"])
    parser.add_argument("--quick", action="store_true", help="coarse grid and 500 replicates (smoke run)")
    args = parser.parse_args()

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    step = 0.1 if args.quick else args.ratio_step
    ratios = [float(x) for x in np.round(np.arange(0.5, 0.8 + 1e-9, step), 10)]
    reps_grid = 500 if args.quick else 5000
    reps_curve = 500 if args.quick else 10_000

    for name, job in (
        ("bias and power difference", lambda: bias_and_power_diff(out, ratios, reps_grid, args.seed, args.jobs)),
        ("optimal ratio", lambda: optimal_ratio_curves(out, reps_curve, args.seed, args.jobs)),
        ("edge cases", lambda: edge_case_tables(out, args.table_source, reps_curve, args.seed)),
    ):
        start = time.perf_counter()
        job()
        print(f"{name}: {time.perf_counter() - start:.1f} s")


if __name__ == "__main__":
    main()
