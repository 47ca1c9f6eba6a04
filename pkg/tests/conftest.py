import os

import pytest
from hypothesis import HealthCheck, settings

settings.register_profile("repo", deadline=None, max_examples=40,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("repo")

# one line per acceptance criterion, filled by tests/test_acceptance.py
ACCEPTANCE = {}


@pytest.fixture(scope="session")
def acceptance():
    return ACCEPTANCE


@pytest.fixture
def h2():
    from curvedbm.geometry import HyperbolicSpace

    return HyperbolicSpace(2)


@pytest.fixture
def h3():
    from curvedbm.geometry import HyperbolicSpace

    return HyperbolicSpace(3)


@pytest.fixture
def tmp_out(tmp_path):
    return str(tmp_path)


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(ACCEPTANCE):
        terminalreporter.write_line(ACCEPTANCE[k])


def pytest_configure(config):
    os.environ.setdefault("MPLBACKEND", "Agg")
