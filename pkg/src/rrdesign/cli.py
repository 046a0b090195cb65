"""Command-line front end.

    rrdesign power          --config cfg.json
    rrdesign bias-grid      --config cfg.json --replicates 5000
    rrdesign optimal-rr     --config cfg.json
    rrdesign design-compare --config cfg.json
    rrdesign validate

Exit codes: 0 success, 1 config error, 2 only infeasible results,
3 numerical failure (including failed validation checks).
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import sys
from dataclasses import replace
from pathlib import Path
from typing import Any, Sequence

import numpy as np

from rrdesign import events, power as pw, simulate as sim, studio, validation
from rrdesign.config import FORMATS, ScenarioConfig
from rrdesign.errors import BracketError, ConfigError, DegenerateFit, Unreachable

EXIT_OK, EXIT_CONFIG, EXIT_INFEASIBLE, EXIT_NUMERIC = 0, 1, 2, 3

DEFAULT_REPLICATES = {"power": 10_000, "bias-grid": 5_000, "optimal-rr": 10_000, "design-compare": 10_000}


class InfeasibleOnly(Exception):
    pass


# ---------------------------------------------------------------------------
# output


def fmt_number(x: Any) -> Any:
    """6 significant digits; None/nan become None."""
    if isinstance(x, (bool, np.bool_)):
        return bool(x)
    if isinstance(x, (int, np.integer)):
        return int(x)
    if isinstance(x, (float, np.floating)):
        if math.isnan(x):
            return None
        if math.isinf(x):
            return "inf" if x > 0 else "-inf"
        return float(f"{x:.6g}")
    return x


def _csv_cell(x: Any) -> str:
    x = fmt_number(x)
    if x is None:
        return ""
    if isinstance(x, bool):
        return "true" if x else "false"
    if isinstance(x, float):
        return f"{x:.6g}"
    return str(x)


def render(rows: list[dict], fmt: str) -> str:
    if fmt == "json":
        return json.dumps([{k: fmt_number(v) for k, v in row.items()} for row in rows], indent=2) + "\n"
    buf = io.StringIO()
    if rows:
        fields = list(rows[0])
        for row in rows[1:]:
            fields += [k for k in row if k not in fields]
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(fields)
        for row in rows:
            w.writerow([_csv_cell(row.get(k)) for k in fields])
    return buf.getvalue()


def emit(rows: list[dict], fmt: str, out: str | None, suffix: str = "") -> None:
    text = render(rows, fmt)
    if out is None:
        if suffix:
            sys.stdout.write(f"# {suffix}\n")
        sys.stdout.write(text)
        return
    path = Path(out)
    if suffix:
        path = path.with_name(f"{path.stem}_{suffix}{path.suffix or '.' + fmt}")
    path.write_text(text)


# ---------------------------------------------------------------------------
# subcommands


def cmd_power(cfg: ScenarioConfig) -> list[dict]:
    design = cfg.trial_design()
    rows = []
    for method in cfg.methods():
        if method is pw.ApproxMethod.EMPIRICAL:
            est = sim.empirical_power(design, design.d, design.alpha, cfg.run.replicates, cfg.run.seed, cfg.run.jobs)
            rows.append(
                {
                    "method": method.value, "phi": design.phi, "d": design.d, "mu": None,
                    "power": est.power, "mc_se": est.mc_se, "replicates": est.replicates,
                    "duration": est.mean_duration,
                    "events_experimental": est.mean_events_by_arm[0],
                    "events_control": est.mean_events_by_arm[1],
                }
            )
            continue
        res = pw.power(method, design)
        e = res.expected_events or (None, None)
        duration = res.duration if res.duration is not None else events.trial_duration(design, design.d)
        rows.append(
            {
                "method": method.value, "phi": design.phi, "d": design.d, "mu": res.mu,
                "power": res.power, "mc_se": None, "replicates": None, "duration": duration,
                "events_experimental": e[0], "events_control": e[1],
            }
        )
    return rows


def _bias_cell(args) -> list[dict]:
    hr, ratio, rr, grid, methods, replicates, seed = args
    base = studio.build_grid_design(
        hr, grid.control_median, ratio,
        dropout_probability=grid.dropout_probability, dropout_months=grid.dropout_months,
    )
    design = base.replace(phi=rr)
    key = {"hr": hr, "event_patient_ratio": ratio, "rr": rr, "d": design.d, "n": design.n}
    try:
        est = sim.empirical_power(design, replicates=replicates, seed=seed)
        emp, se = est.power, est.mc_se
    except (Unreachable, DegenerateFit, ValueError):
        emp, se = math.nan, math.nan
    rows = []
    for m in methods:
        try:
            p = pw.power(m, design).power
        except (Unreachable, BracketError, ValueError):
            p = math.nan
        rows.append({**key, "method": m.value, "power": p, "empirical_power": emp, "mc_se": se, "bias": p - emp})
    return rows


def cmd_bias_grid(cfg: ScenarioConfig) -> list[dict]:
    grid = cfg.grid
    methods = [pw.ApproxMethod.parse(m) for m in grid.methods]
    tasks = [
        (hr, ratio, rr, grid, methods, cfg.run.replicates, cfg.run.seed)
        for hr in grid.hazard_ratios
        for ratio in grid.event_patient_ratios
        for rr in grid.rrs
    ]
    if cfg.run.jobs > 1:
        from concurrent.futures import ProcessPoolExecutor

        with ProcessPoolExecutor(max_workers=cfg.run.jobs) as pool:
            chunks = list(pool.map(_bias_cell, tasks))
    else:
        chunks = [_bias_cell(t) for t in tasks]
    rows = [row for chunk in chunks for row in chunk]
    return sorted(rows, key=lambda r: (r["hr"], r["event_patient_ratio"], r["rr"], r["method"]))


def cmd_optimal_rr(cfg: ScenarioConfig) -> tuple[list[dict], list[dict]]:
    design = cfg.trial_design()
    base = design.replace(phi=1.0)
    rows = []
    for method in cfg.methods():
        if method is pw.ApproxMethod.EMPIRICAL:
            continue
        if method is pw.ApproxMethod.PIECEWISE and design.control.is_exponential:
            continue
        try:
            sol = pw.optimal_rr(method, design)
        except (BracketError, Unreachable) as exc:
            rows.append({"method": method.value, "phi_star": None, "balance": None,
                         "power_at_phi_star": None, "power_at_1to1": None, "error": str(exc)})
            continue
        rows.append(
            {
                "method": method.value,
                "phi_star": sol.phi_star,
                "balance": sol.achieved_balance,
                "power_at_phi_star": pw.power(method, design.replace(phi=sol.phi_star)).power,
                "power_at_1to1": pw.power(method, base).power,
                "error": "",
            }
        )
    phis = cfg.run.curve_phis or tuple(np.round(np.arange(0.5, 3.0001, 0.1), 10))
    empirical = pw.ApproxMethod.EMPIRICAL in cfg.methods()
    curve = []
    for phi in phis:
        variant = design.replace(phi=float(phi))
        row = {"phi": float(phi), "power_rubinstein": pw.power(pw.ApproxMethod.RUBINSTEIN, variant).power,
               "balance": pw.event_balance(design, design.d, float(phi))}
        if empirical:
            est = sim.empirical_power(variant, replicates=cfg.run.replicates, seed=cfg.run.seed, jobs=cfg.run.jobs)
            row.update(power_empirical=est.power, mc_se=est.mc_se)
        curve.append(row)
    return rows, curve


def cmd_design_compare(cfg: ScenarioConfig) -> list[dict]:
    design = cfg.trial_design()
    settings = studio.SimulationSettings(cfg.run.replicates, cfg.run.seed)
    table = studio.compare_designs(
        design, cfg.run.phis, cfg.run.event_source, settings, simulate_durations=cfg.run.simulate_durations
    )
    rows = [
        {
            "design": r.label, "rr": r.rr, "description": r.description, "d": r.d, "n": r.n,
            "accrual_duration": r.accrual_duration, "duration": r.duration, "feasible": r.feasible,
            "accrual_rate": r.comparison.design.accrual_rate if r.comparison else design.accrual_rate,
            "fixed": ";".join(r.fixed),
        }
        for r in table
    ]
    return rows


def text_table(rows: list[dict]) -> str:
    """Aligned table; fixed values in parentheses, infeasible accrual marked."""
    header = ["Design", "RR, Description", "d", "n", "Accrual (months)", "Duration (months)"]
    body = []
    for r in rows:
        fixed = set(r["fixed"].split(";")) if r["fixed"] else set()

        def paren(value: str, name: str) -> str:
            return f"({value})" if name in fixed else value

        accrual = f"{r['accrual_duration']:.1f}"
        if not r["feasible"]:
            accrual = "0*" if r["accrual_duration"] == 0 else "-"
        body.append(
            [
                r["design"],
                f"{r['rr']}, {r['description']}",
                "-" if r["d"] is None else str(r["d"]),
                paren(str(r["n"]), "n"),
                paren(accrual, "accrual_duration"),
                paren(f"{r['duration']:.1f}", "duration") if math.isfinite(r["duration"]) else "-",
            ]
        )
    widths = [max(len(x) for x in col) for col in zip(header, *body)]
    lines = ["  ".join(h.ljust(w) for h, w in zip(header, widths))]
    lines.append("  ".join("-" * w for w in widths))
    lines += ["  ".join(c.ljust(w) for c, w in zip(row, widths)) for row in body]
    if any(not r["feasible"] and r["accrual_duration"] == 0 for r in rows):
        lines.append("* infeasible: even instantaneous accrual misses the timeline; duration shown is at instantaneous accrual")
    if any(r["d"] is None for r in rows):
        lines.append("- infeasible: no reachable event count keeps the target power at this ratio")
    return "\n".join(lines) + "\n"


def cmd_validate(cfg: ScenarioConfig | None = None) -> list[dict]:
    return [
        {"check": c.name, "measured": c.measured, "threshold": c.threshold, "passed": c.passed}
        for c in validation.run_checks()
    ]


# ---------------------------------------------------------------------------
# entry point


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="rrdesign", description=__doc__.split("\n")[0])
    sub = parser.add_subparsers(dest="command", required=True)
    for name, needs_config in (
        ("power", True), ("bias-grid", False), ("optimal-rr", True), ("design-compare", True), ("validate", False),
    ):
        p = sub.add_parser(name)
        p.add_argument("--config", required=needs_config, help="scenario JSON file")
        p.add_argument("--format", choices=FORMATS)
        p.add_argument("--seed", type=int)
        p.add_argument("--replicates", type=int)
        p.add_argument("--out", help="output file (stdout if omitted)")
        p.add_argument("--jobs", type=int, help="worker processes for simulations")
        p.add_argument("--write-config", help="write the normalized configuration to this path")
    return parser


def _load_config(args) -> ScenarioConfig:
    cfg = ScenarioConfig.load(args.config) if args.config else ScenarioConfig()
    run = cfg.run
    overrides = {k: getattr(args, k) for k in ("format", "seed", "replicates", "out", "jobs") if getattr(args, k) is not None}
    run = replace(run, **overrides)
    if run.replicates is None:
        run = replace(run, replicates=DEFAULT_REPLICATES.get(args.command, 10_000))
    if run.replicates < 1:
        raise ConfigError("replicates must be at least 1")
    return replace(cfg, run=run)


def _error(kind: str, message: str) -> None:
    sys.stderr.write(json.dumps({"error": kind, "message": message}) + "\n")


def run(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = _load_config(args)
        if args.write_config:
            cfg.dump(args.write_config)
        fmt, out = cfg.run.format, cfg.run.out
        if args.command == "power":
            emit(cmd_power(cfg), fmt, out)
        elif args.command == "bias-grid":
            emit(cmd_bias_grid(cfg), fmt, out)
        elif args.command == "optimal-rr":
            rows, curve = cmd_optimal_rr(cfg)
            emit(rows, fmt, out)
            emit(curve, fmt, out, suffix="curve")
        elif args.command == "design-compare":
            rows = cmd_design_compare(cfg)
            emit(rows, fmt, out)
            table = text_table(rows)
            if out is None:
                sys.stdout.write("\n" + table)
            else:
                Path(out).with_suffix(".txt").write_text(table)
            if all(not r["feasible"] for r in rows[1:]):
                raise InfeasibleOnly("every variant design is infeasible")
        elif args.command == "validate":
            rows = cmd_validate(cfg)
            emit(rows, fmt, out)
            if not all(r["passed"] for r in rows):
                _error("validation", "one or more checks failed")
                return EXIT_NUMERIC
    except ConfigError as exc:
        _error("config", str(exc))
        return EXIT_CONFIG
    except InfeasibleOnly as exc:
        _error("infeasible", str(exc))
        return EXIT_INFEASIBLE
    except (Unreachable, BracketError, DegenerateFit, ArithmeticError, RuntimeError) as exc:
        _error("numeric", str(exc))
        return EXIT_NUMERIC
    return EXIT_OK


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
