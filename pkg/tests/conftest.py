import os
import sys

import pytest
from hypothesis import HealthCheck, settings

from iwnplan.geometry import Boundary, FloorPlan, Point2D, default_materials, rect_walls
from iwnplan.scenarios import reference_office_plan

settings.register_profile("default", deadline=None, suppress_health_check=[HealthCheck.too_slow])
settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "default"))


@pytest.fixture
def office():
    return reference_office_plan()


@pytest.fixture
def room():
    b = Boundary(Point2D(0.0, 0.0), 20.0, 10.0)
    return FloorPlan(b, default_materials(), tuple(rect_walls(b, "concrete")), (), ())


@pytest.fixture
def open_plan():
    """A 20 x 10 boundary with no walls at all."""
    return FloorPlan(Boundary(Point2D(0.0, 0.0), 20.0, 10.0), default_materials(), (), (), ())


def pytest_terminal_summary(terminalreporter):
    mod = sys.modules.get("test_acceptance")
    if mod is None or not mod.RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for line in mod.report_lines():
        terminalreporter.write_line(line)
