import numpy as np
import pytest

from ctapsim import chipgeom, magfield, qgrid

_CRITERIA: list[tuple[str, bool, str]] = []


def record_criterion(name: str, passed: bool, detail: str = ""):
    _CRITERIA.append((name, bool(passed), detail))


@pytest.fixture
def criterion():
    return record_criterion


def pytest_terminal_summary(terminalreporter, exitstatus):
    if not _CRITERIA:
        return
    tw = terminalreporter
    tw.section("acceptance criteria")
    for name, passed, detail in _CRITERIA:
        status = "PASS" if passed else "FAIL"
        line = f"{status}  {name}"
        if detail:
            line += f"  [{detail}]"
        tw.write_line(line)


@pytest.fixture(scope="session")
def li6_mass():
    from ctapsim.constants import species_mass

    return species_mass("li6")


@pytest.fixture(scope="session")
def coarse_standard_potential():
    """Reference layout sampled on a coarse grid; shared by slower tests."""
    layout = chipgeom.standard_layout()
    dy = 4e-6 / 16
    grid = qgrid.make_grid(64, 16, 128, (20e-6, 4e-6, 1000e-6),
                           origin=(-10e-6, dy / 2, 0.0))
    return magfield.assemble_potential(layout, grid)
