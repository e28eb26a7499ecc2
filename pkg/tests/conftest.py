import os
from collections import OrderedDict
from pathlib import Path

import pytest
from hypothesis import HealthCheck, settings

FIXTURES = Path(__file__).parent / "fixtures"

settings.register_profile("default", deadline=None, suppress_health_check=[HealthCheck.too_slow])
settings.register_profile("ci", deadline=None, max_examples=300, suppress_health_check=[HealthCheck.too_slow])
settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "default"))

_criteria: "OrderedDict[str, list[tuple[str, str]]]" = OrderedDict()


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(name): acceptance criterion this test verifies")


@pytest.fixture
def fixtures_dir() -> Path:
    return FIXTURES


def pytest_collection_modifyitems(items):
    for item in items:
        mark = item.get_closest_marker("criterion")
        if mark:
            _criteria.setdefault(mark.args[0], [])


def pytest_runtest_logreport(report):
    if report.when != "call" and not (report.when == "setup" and report.outcome != "passed"):
        return
    item_mark = getattr(report, "criterion", None)
    if item_mark is None:
        return
    _criteria.setdefault(item_mark, []).append((report.nodeid.split("::")[-1], report.outcome))


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    mark = item.get_closest_marker("criterion")
    if mark:
        report.criterion = mark.args[0]


def pytest_terminal_summary(terminalreporter):
    if not any(_criteria.values()):
        return
    tr = terminalreporter
    tr.section("acceptance criteria")
    for name, results in _criteria.items():
        if not results:
            continue
        ok = all(outcome == "passed" for _, outcome in results)
        detail = ", ".join(f"{test}={outcome}" for test, outcome in results)
        tr.write_line(f"[{'PASS' if ok else 'FAIL'}] {name} ({detail})")
