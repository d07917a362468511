"""Acceptance bookkeeping: one PASS/FAIL line per numbered criterion."""

from collections import defaultdict

import pytest

CRITERIA = {
    1: "exact reproduction of the nine vehicle input polynomials",
    2: "CAD fixture agreement on seeded samples",
    3: "region soundness and volume convergence",
    4: "sigmoid derivative bound constants",
    5: "quadrotor thrust scenario",
    6: "tilt window values and sampled pitch compliance",
    7: "Bezier algebra property suite",
    8: "flatness consistency of both models",
    9: "closed-loop behavior and limit audit",
}

_outcomes: dict = defaultdict(list)


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(n): acceptance criterion number")


def pytest_collection_modifyitems(items):
    for item in items:
        m = item.get_closest_marker("criterion")
        if m is not None:
            item.user_properties.append(("criterion", m.args[0]))


def pytest_runtest_logreport(report):
    crit = dict(report.user_properties).get("criterion")
    if crit is None:
        return
    if report.when == "call" or report.failed or report.skipped:
        _outcomes[crit].append(report.passed and report.when == "call")


def pytest_terminal_summary(terminalreporter):
    if not _outcomes:
        return
    terminalreporter.section("acceptance criteria")
    for n, title in CRITERIA.items():
        results = _outcomes.get(n)
        if not results:
            status = "NOT RUN"
        else:
            status = "PASS" if all(results) else "FAIL"
        terminalreporter.write_line(f"criterion {n}: {status}  {title}")


@pytest.fixture
def timer():
    import time

    start = time.perf_counter()
    return lambda: time.perf_counter() - start
