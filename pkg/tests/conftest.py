import numpy as np
import pytest

from qatsp import tsp_instance as tsp


@pytest.fixture(scope="session")
def burma():
    return tsp.burma14()


@pytest.fixture(scope="session")
def b5(burma):
    return tsp.first_k(burma, 5)


@pytest.fixture(scope="session")
def b7(burma):
    return tsp.first_k(burma, 7)


@pytest.fixture(scope="session")
def b12(burma):
    return tsp.first_k(burma, 12)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


# ---------------------------------------------------------------- acceptance report

_ACCEPTANCE = []


def pytest_runtest_logreport(report):
    if "test_acceptance.py" not in report.nodeid or "::test_criterion_" not in report.nodeid:
        return
    if report.when == "call" or (report.when == "setup" and report.outcome != "passed"):
        detail = dict(report.user_properties).get("detail", "")
        _ACCEPTANCE.append((report.nodeid.split("::")[-1], report.outcome, detail))


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for name, outcome, detail in sorted(_ACCEPTANCE):
        num = int(name.split("_")[2])
        verdict = "PASS" if outcome == "passed" else "FAIL"
        terminalreporter.write_line(f"criterion {num:2d}: {verdict}  {detail}")
