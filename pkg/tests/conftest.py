"""Shared fixtures for the peelcore test suite.

Heavy objects (critical constants, the min-law tables) are computed once per
session.  The acceptance tests additionally register a one-line verdict per
end-to-end check which is echoed in the terminal summary.
"""

import pytest

from peelcore.ensemble import EnsembleParams
from peelcore.ode import critical_constants
from peelcore.airy import omega_integral


@pytest.fixture(scope="session")
def params3():
    # l, n, m here only carry l into the analytic layer; n and m are dummies.
    return EnsembleParams(l=3, n=100, m=100)


@pytest.fixture(scope="session")
def cc3(params3):
    return critical_constants(params3, h=1e-4)


@pytest.fixture(scope="session")
def cc3_omega(cc3):
    return cc3.with_omega(omega_integral())


# ---------------------------------------------------------------------------
# Acceptance reporting: each acceptance test appends "[cNN] PASS/FAIL - detail"
# and the summary hook prints them all at the end of the run.

_ACCEPTANCE_LINES = []


@pytest.fixture(scope="session")
def acceptance_lines():
    return _ACCEPTANCE_LINES


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if not _ACCEPTANCE_LINES:
        return
    terminalreporter.section("end-to-end checks")
    for line in sorted(_ACCEPTANCE_LINES):
        terminalreporter.write_line(line)
