import pytest
from hypothesis import HealthCheck, settings

import chrconf
from chrconf.specs import parse_spec_file
from chrconf.syntax import parse_program_file

settings.register_profile("default", deadline=None, suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")

# criterion name -> (passed, detail); filled in by test_acceptance.py
ACCEPTANCE = {}


def load(name):
    return parse_program_file(chrconf.shipped(name + ".chr"))


def load_spec(name):
    return parse_spec_file(chrconf.shipped(name + ".cspec"))


@pytest.fixture
def set_prog():
    return load("set")


@pytest.fixture
def zigzag_prog():
    return load("zigzag")


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for name, (ok, detail) in ACCEPTANCE.items():
        terminalreporter.write_line(f"{'PASS' if ok else 'FAIL'}  {name}: {detail}")
