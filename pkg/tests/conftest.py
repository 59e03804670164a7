from __future__ import annotations

import sys
from pathlib import Path

import pytest

from commsim.synth import synth_scene
from commsim.worldmodel import WorldMap

TESTS = Path(__file__).parent
FIXTURES = TESTS / "fixtures"
STUBS = TESTS / "stubs"
sys.path.insert(0, str(TESTS))


@pytest.fixture(scope="session")
def bundle0():
    return synth_scene(0)


@pytest.fixture(scope="session")
def world0(bundle0):
    return WorldMap(bundle0)


@pytest.fixture(scope="session")
def fixtures() -> Path:
    return FIXTURES


@pytest.fixture(scope="session")
def stubs() -> Path:
    return STUBS


# --------------------------------------------------------------------------
# acceptance report: one pass/fail line per criterion at the end of the run

_ACCEPTANCE: dict[int, tuple[str, str, str]] = {}


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    mark = item.get_closest_marker("criterion")
    if mark is None or rep.when != "call":
        return
    num, title = mark.args
    detail = getattr(item, "acceptance_detail", "")
    _ACCEPTANCE[num] = ("PASS" if rep.passed else "FAIL", title, detail)


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(num, title): acceptance criterion implemented by the test")


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for num in sorted(_ACCEPTANCE):
        status, title, detail = _ACCEPTANCE[num]
        line = f"[{status}] {num:2d}. {title}"
        terminalreporter.write_line(line + (f" ({detail})" if detail else ""))
