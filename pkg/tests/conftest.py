import math

import pytest

from rrdesign import studio
from rrdesign.design import TrialDesign
from rrdesign.models import PiecewiseExponential


@pytest.fixture(scope="session")
def cm017() -> TrialDesign:
    return studio.checkmate017()


@pytest.fixture
def single_knot() -> PiecewiseExponential:
    base = math.log(2) / 12
    return PiecewiseExponential((base, base * 1.5), (4.0,))


def pytest_terminal_summary(terminalreporter):
    import sys

    module = sys.modules.get("test_acceptance") or sys.modules.get("tests.test_acceptance")
    lines = getattr(module, "RESULTS", None)
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in sorted(lines, key=lambda s: int(s.split("criterion")[1].split(":")[0])):
            terminalreporter.write_line(line)
