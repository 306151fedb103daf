import math

import pytest
from hypothesis import settings

settings.register_profile("default", max_examples=100, deadline=None)
settings.load_profile("default")

TABLE2_CSV = "bundled:table2"


def deg(x):
    return math.radians(x)


@pytest.fixture(scope="session")
def table2_records():
    from phaseremap.config import bundled_text
    from phaseremap.io import parse_counts_csv

    return parse_counts_csv(bundled_text("table2.csv"))


@pytest.fixture(scope="session")
def default_params():
    from phaseremap.config import load_params

    return load_params("bundled:paper_params")


_CRITERIA = {}


def pytest_runtest_logreport(report):
    if "test_acceptance.py::test_criterion_" not in report.nodeid:
        return
    if report.when == "call" or (report.when == "setup" and report.outcome != "passed"):
        name = report.nodeid.split("::")[-1]
        _CRITERIA[name] = (report.outcome, getattr(report, "longrepr", None))


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for name in sorted(_CRITERIA, key=lambda n: int(n.split("_")[2])):
        outcome, longrepr = _CRITERIA[name]
        mark = "PASS" if outcome == "passed" else "FAIL"
        detail = ""
        if outcome != "passed" and longrepr is not None:
            crash = getattr(longrepr, "reprcrash", None)
            detail = f"  ({crash.message.splitlines()[0][:160]})" if crash else ""
        terminalreporter.write_line(f"{mark}  {name}{detail}")
