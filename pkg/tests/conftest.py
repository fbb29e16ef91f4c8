import functools

import pytest

from shortpulse.nullforms import default_coupling, dt_squared_coupling, linear_coupling
from shortpulse.nullgrid import build_grid
from shortpulse.pulsedata import make_short_pulse
from shortpulse.solver import EvolutionParams, evolve

SCAN = (0.1, 0.05, 0.025)

_COUPLINGS = {"q0": default_coupling, "linear": linear_coupling, "dt2": dt_squared_coupling}


@functools.lru_cache(maxsize=None)
def sheet(kind: str = "q0", delta: float = 0.05, amplitude: float = 1.0, refine: int = 0, ubar_max: float = 40.0):
    """Shared evolutions; each configuration is computed once per session."""
    data = make_short_pulse(delta, amplitude)
    grid = build_grid(delta, ubar_max=ubar_max, refine=refine)
    return evolve(data, grid, EvolutionParams(coupling=_COUPLINGS[kind]()))


@pytest.fixture(scope="session")
def get_sheet():
    return sheet


CRITERIA_LINES: dict[int, str] = {}


@pytest.fixture(scope="session")
def report_line():
    def put(n: int, ok: bool, detail: str):
        line = f"criterion {n:2d}: {'PASS' if ok else 'FAIL'}  {detail}"
        CRITERIA_LINES[n] = line
        print(line)

    return put


def pytest_terminal_summary(terminalreporter):
    if CRITERIA_LINES:
        terminalreporter.section("acceptance criteria")
        for n in sorted(CRITERIA_LINES):
            terminalreporter.write_line(CRITERIA_LINES[n])
