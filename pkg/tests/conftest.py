import time
from dataclasses import replace

import pytest

from etc_wsan.config import load_reference_scenario
from etc_wsan.engine import MODES, run_mode

ACCEPTANCE = []


def record_criterion(number, title, passed, detail=""):
    line = f"[criterion {number}] {'PASS' if passed else 'FAIL'} {title}"
    if detail:
        line += f" ({detail})"
    ACCEPTANCE.append(line)
    print(line)
    return passed


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE:
            terminalreporter.write_line(line)


@pytest.fixture(scope="session")
def ref_doc():
    return load_reference_scenario()


@pytest.fixture(scope="session")
def ref_cfg(ref_doc):
    return ref_doc.scenario


@pytest.fixture
def short_cfg(ref_cfg):
    return replace(ref_cfg, horizon=5.0)


@pytest.fixture(scope="session")
def ref_runs(ref_cfg):
    """Full-horizon run of every mode on the reference scenario, with wall-clock times."""
    runs, times = {}, {}
    for mode in MODES:
        t0 = time.perf_counter()
        runs[mode] = run_mode(ref_cfg, mode)
        times[mode] = time.perf_counter() - t0
    return runs, times
