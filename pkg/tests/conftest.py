import pytest

from bubbletower.background import BackgroundK, GaugePhi, normalize_background
from bubbletower.kelvin import Dimensions
from bubbletower.param_select import choose_geometry, tighten_sequences
from bubbletower.pipeline import PipelineConfig, run_pipeline


@pytest.fixture(scope="session")
def flagship_geometry():
    k, delta = normalize_background(BackgroundK(), 0.5)
    return k, choose_geometry(k, delta, Dimensions(8, 2), 0.5)


@pytest.fixture(scope="session")
def flagship_family(flagship_geometry):
    _, g = flagship_geometry
    return tighten_sequences(g, 18, GaugePhi("power", 4.0))


@pytest.fixture(scope="session")
def flagship_run():
    return run_pipeline(PipelineConfig())


@pytest.fixture(scope="session")
def exp_run():
    return run_pipeline(PipelineConfig(phi="exp"))


# acceptance criteria report one line each; the lines are repeated in the terminal summary
ACCEPTANCE_LINES = []


@pytest.fixture
def record():
    def _record(label, ok, detail):
        line = f"criterion {label:<3} {'PASS' if ok else 'FAIL'}  {detail}"
        ACCEPTANCE_LINES.append(line)
        print(line)
        return ok
    return _record


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
