"""JSON scenario configuration.

Months for times, patients/month for rates, decimals for probabilities. A
two-sided alpha is halved into the one-sided level used everywhere else.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Any

from rrdesign import power as pw
from rrdesign.design import TrialDesign
from rrdesign.errors import ConfigError
from rrdesign.models import PiecewiseExponential, dropout_hazard
from rrdesign.studio import build_grid_design, grid_accrual_rate

FORMATS = ("csv", "json")


@dataclass(frozen=True)
class ArmHazards:
    hazards: tuple[float, ...]
    cuts: tuple[float, ...] = ()

    def model(self) -> PiecewiseExponential:
        return PiecewiseExponential(self.hazards, self.cuts)


@dataclass(frozen=True)
class DesignBlock:
    hazard_ratio: float | None = None
    control_median: float | None = None
    control: ArmHazards | None = None
    experimental: ArmHazards | None = None
    d: int | None = None
    event_patient_ratio: float | None = None
    n: int | None = None
    phi: float = 1.0
    accrual_rate: float | None = None
    dropout_probability: float = 0.0
    dropout_months: float = 12.0
    alpha_two_sided: float = 0.05
    power: float = 0.8


@dataclass(frozen=True)
class RunBlock:
    methods: tuple[str, ...] = ("S", "F", "R", "E")
    replicates: int | None = None
    seed: int = 2023
    out: str | None = None
    format: str = "csv"
    jobs: int = 1
    phis: tuple[float, ...] = (1.5, 2.0)
    event_source: str = "rubinstein"
    simulate_durations: bool = False
    curve_phis: tuple[float, ...] | None = None


@dataclass(frozen=True)
class GridBlock:
    hazard_ratios: tuple[float, ...] = (0.5, 0.6, 0.7, 0.8)
    event_patient_ratios: tuple[float, ...] = (0.5, 0.6, 0.7, 0.8)
    rrs: tuple[float, ...] = (1.0, 1.5, 2.0)
    methods: tuple[str, ...] = ("S", "F", "R")
    control_median: float = 12.0
    dropout_probability: float = 0.01
    dropout_months: float = 12.0


@dataclass(frozen=True)
class ScenarioConfig:
    design: DesignBlock | None = None
    run: RunBlock = field(default_factory=RunBlock)
    grid: GridBlock = field(default_factory=GridBlock)

    # -- parsing -----------------------------------------------------------

    @classmethod
    def from_dict(cls, raw: dict[str, Any]) -> ScenarioConfig:
        if not isinstance(raw, dict):
            raise ConfigError("configuration must be a JSON object")
        unknown = set(raw) - {"design", "run", "grid"}
        if unknown:
            raise ConfigError(f"unknown top-level keys: {sorted(unknown)}")
        design = _parse_design(raw["design"]) if raw.get("design") is not None else None
        run = _parse_block(RunBlock, raw.get("run", {}), tuples=("methods", "phis", "curve_phis"))
        grid = _parse_block(
            GridBlock, raw.get("grid", {}), tuples=("hazard_ratios", "event_patient_ratios", "rrs", "methods")
        )
        if run.format not in FORMATS:
            raise ConfigError(f"format must be one of {FORMATS}")
        for m in run.methods + grid.methods:
            try:
                pw.ApproxMethod.parse(m)
            except ValueError as exc:
                raise ConfigError(str(exc)) from None
        cfg = cls(design, run, grid)
        if design is not None:
            cfg.trial_design()  # validate eagerly
        return cfg

    @classmethod
    def load(cls, path: str | Path) -> ScenarioConfig:
        try:
            raw = json.loads(Path(path).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from None
        return cls.from_dict(raw)

    def to_dict(self) -> dict[str, Any]:
        out: dict[str, Any] = {}
        if self.design is not None:
            out["design"] = _strip_none(asdict(self.design))
            dropout = {"probability": out["design"].pop("dropout_probability"),
                       "months": out["design"].pop("dropout_months")}
            out["design"]["dropout"] = dropout
        out["run"] = _strip_none(asdict(self.run))
        out["grid"] = asdict(self.grid)
        return _listify(out)

    def dump(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n")

    # -- derived objects ---------------------------------------------------

    def trial_design(self) -> TrialDesign:
        if self.design is None:
            raise ConfigError("configuration has no design block")
        return _build_design(self.design)

    def methods(self) -> list[pw.ApproxMethod]:
        return [pw.ApproxMethod.parse(m) for m in self.run.methods]


def _strip_none(d: dict) -> dict:
    return {k: (_strip_none(v) if isinstance(v, dict) else v) for k, v in d.items() if v is not None}


def _listify(obj):
    if isinstance(obj, dict):
        return {k: _listify(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_listify(v) for v in obj]
    return obj


def _parse_block(cls, raw: dict, tuples: tuple[str, ...] = ()):
    if not isinstance(raw, dict):
        raise ConfigError(f"{cls.__name__} must be an object")
    names = set(cls.__dataclass_fields__)
    unknown = set(raw) - names
    if unknown:
        raise ConfigError(f"unknown keys in {cls.__name__}: {sorted(unknown)}")
    values = dict(raw)
    for key in tuples:
        if values.get(key) is not None:
            values[key] = tuple(values[key])
    try:
        return cls(**values)
    except TypeError as exc:
        raise ConfigError(str(exc)) from None


def _parse_arm(raw) -> ArmHazards:
    if not isinstance(raw, dict) or "hazards" not in raw:
        raise ConfigError("arm blocks need a 'hazards' list")
    return ArmHazards(tuple(float(h) for h in raw["hazards"]), tuple(float(c) for c in raw.get("cuts", ())))


def _parse_design(raw: dict) -> DesignBlock:
    if not isinstance(raw, dict):
        raise ConfigError("design must be an object")
    values = dict(raw)
    dropout = values.pop("dropout", None)
    if dropout is not None:
        if not isinstance(dropout, dict):
            raise ConfigError("dropout must be an object with probability and months")
        values["dropout_probability"] = dropout.get("probability", 0.0)
        values["dropout_months"] = dropout.get("months", 12.0)
    arms = values.pop("arms", None)
    if arms is not None:
        values["control"] = _parse_arm(arms.get("control"))
        values["experimental"] = _parse_arm(arms.get("experimental"))
    for key in ("control", "experimental"):
        if isinstance(values.get(key), dict):
            values[key] = _parse_arm(values[key])
    if "alpha_one_sided" in values:
        if "alpha_two_sided" in values:
            raise ConfigError("give alpha_two_sided or alpha_one_sided, not both")
        values["alpha_two_sided"] = 2 * values.pop("alpha_one_sided")
    block = _parse_block(DesignBlock, values)

    by_hr = block.hazard_ratio is not None or block.control_median is not None
    by_arms = block.control is not None or block.experimental is not None
    if by_hr == by_arms:
        raise ConfigError("give exactly one of {hazard_ratio + control_median, arms}")
    if by_hr and (block.hazard_ratio is None or block.control_median is None):
        raise ConfigError("hazard_ratio and control_median go together")
    if by_arms and (block.control is None or block.experimental is None):
        raise ConfigError("arms needs both control and experimental hazards")
    if (block.d is None) == (block.event_patient_ratio is None):
        raise ConfigError("give exactly one of {d, event_patient_ratio}")
    return block


def _hazard_ratio_from_arms(block: DesignBlock) -> tuple[PiecewiseExponential, float]:
    control = block.control.model()
    experimental = block.experimental.model()
    if control.cuts != experimental.cuts:
        raise ConfigError("control and experimental arms need the same cut points")
    ratios = [e / c for e, c in zip(experimental.hazards, control.hazards)]
    if not all(math.isclose(r, ratios[0], rel_tol=1e-9) for r in ratios):
        raise ConfigError("arm hazards are not proportional")
    return control, ratios[0]


def _build_design(block: DesignBlock) -> TrialDesign:
    try:
        if block.control is not None:
            control, hr = _hazard_ratio_from_arms(block)
        else:
            control, hr = PiecewiseExponential.from_median(block.control_median), block.hazard_ratio
        alpha = block.alpha_two_sided / 2.0
        eta = dropout_hazard(block.dropout_probability, block.dropout_months)
        d, n = block.d, block.n
        if block.event_patient_ratio is not None:
            grid = build_grid_design(hr, None, block.event_patient_ratio, alpha, block.power, control=control)
            d = grid.d
            if n is None:
                n = grid.n
        if n is None:
            raise ConfigError("n is required when d is given")
        rate = block.accrual_rate if block.accrual_rate is not None else grid_accrual_rate(hr)
        return TrialDesign(
            control=control,
            hazard_ratio=hr,
            n=int(n),
            accrual_rate=float(rate),
            phi=float(block.phi),
            dropout_rate=eta,
            alpha=alpha,
            target_power=block.power,
            d=int(d),
        )
    except ConfigError:
        raise
    except (ValueError, TypeError) as exc:
        raise ConfigError(str(exc)) from None
