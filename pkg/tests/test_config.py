import json
import math

import pytest

from rrdesign import studio
from rrdesign.config import ScenarioConfig
from rrdesign.errors import ConfigError

BASE = {
    "hazard_ratio": 0.6,
    "control_median": 12.0,
    "event_patient_ratio": 0.6,
    "dropout": {"probability": 0.01, "months": 12.0},
}


def config(**design):
    return ScenarioConfig.from_dict({"design": {**BASE, **design}})


class TestParsing:
    def test_grid_style_design(self):
        design = config().trial_design()
        expected = studio.build_grid_design(0.6, 12.0, 0.6)
        assert design == expected

    def test_two_sided_alpha_halved(self):
        assert config(alpha_two_sided=0.04).trial_design().alpha == pytest.approx(0.02)

    def test_one_sided_alpha_accepted(self):
        assert config(alpha_one_sided=0.025).trial_design().alpha == pytest.approx(0.025)

    def test_explicit_d_and_n(self):
        raw = {k: v for k, v in BASE.items() if k != "event_patient_ratio"}
        design = ScenarioConfig.from_dict({"design": {**raw, "d": 100, "n": 150, "accrual_rate": 10}}).trial_design()
        assert (design.d, design.n, design.accrual_rate) == (100, 150, 10.0)

    def test_per_arm_hazards(self):
        arms = {"control": {"hazards": [0.1, 0.05], "cuts": [4]}, "experimental": {"hazards": [0.06, 0.03], "cuts": [4]}}
        cfg = ScenarioConfig.from_dict({"design": {"arms": arms, "d": 80, "n": 120}})
        design = cfg.trial_design()
        assert design.hazard_ratio == pytest.approx(0.6)
        assert design.control.cuts == (4.0,)

    def test_checkmate017_sample(self):
        design = ScenarioConfig.load("configs/checkmate017.json").trial_design()
        assert design == studio.checkmate017()

    def test_original_protocol_sample(self):
        design = ScenarioConfig.load("configs/checkmate017_original.json").trial_design()
        assert design.alpha == pytest.approx(0.02)
        assert (design.n, design.d, design.target_power) == (264, 189, 0.9)
        assert design.accrual_duration == pytest.approx(12.0)


class TestInvalid:
    @pytest.mark.parametrize(
        "raw",
        [
            {**BASE, "d": 80},
            {k: v for k, v in BASE.items() if k != "event_patient_ratio"},
            {k: v for k, v in BASE.items() if k != "control_median"},
            {**BASE, "arms": {"control": {"hazards": [0.1]}, "experimental": {"hazards": [0.05]}}},
            {**BASE, "hazard_ratio": -1},
            {**BASE, "colour": "blue"},
            {**BASE, "dropout": {"probability": 1.5, "months": 12}},
        ],
    )
    def test_rejected(self, raw):
        with pytest.raises(ConfigError):
            ScenarioConfig.from_dict({"design": raw})

    def test_non_proportional_arms(self):
        arms = {"control": {"hazards": [0.1, 0.05], "cuts": [4]}, "experimental": {"hazards": [0.06, 0.04], "cuts": [4]}}
        with pytest.raises(ConfigError):
            ScenarioConfig.from_dict({"design": {"arms": arms, "d": 80, "n": 120}})

    def test_unknown_method(self):
        with pytest.raises(ConfigError):
            ScenarioConfig.from_dict({"run": {"methods": ["Q"]}})

    def test_bad_format(self):
        with pytest.raises(ConfigError):
            ScenarioConfig.from_dict({"run": {"format": "xml"}})

    def test_unreadable(self, tmp_path):
        path = tmp_path / "broken.json"
        path.write_text("{not json")
        with pytest.raises(ConfigError):
            ScenarioConfig.load(path)

    def test_missing_design(self):
        with pytest.raises(ConfigError):
            ScenarioConfig().trial_design()


class TestRoundTrip:
    @pytest.mark.parametrize(
        "path", ["configs/checkmate017.json", "configs/checkmate017_original.json", "configs/optimal_rr_hr05.json"]
    )
    def test_written_config_reparses(self, path, tmp_path):
        cfg = ScenarioConfig.load(path)
        out = tmp_path / "again.json"
        cfg.dump(out)
        again = ScenarioConfig.load(out)
        assert again == cfg
        assert again.trial_design() == cfg.trial_design()

    def test_dump_is_plain_json(self, tmp_path):
        out = tmp_path / "cfg.json"
        config().dump(out)
        raw = json.loads(out.read_text())
        assert raw["design"]["dropout"] == {"probability": 0.01, "months": 12.0}
