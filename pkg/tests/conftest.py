"""Shared fixtures plus the acceptance-line reporting hook.

Acceptance tests call record_acceptance() with one line per criterion; the
terminal summary prints them after the run and mirrors them to
acceptance_report.txt in the repository root.
"""
import os

import pytest

from smallnoise.models import builtin_model

ACCEPTANCE_LINES = []


def record_acceptance(line: str) -> None:
    ACCEPTANCE_LINES.append(line)


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for line in ACCEPTANCE_LINES:
        terminalreporter.write_line(line)
    root = os.path.dirname(os.path.dirname(os.path.abspath(__file__)))
    with open(os.path.join(root, "acceptance_report.txt"), "w") as fh:
        fh.write("\n".join(ACCEPTANCE_LINES) + "\n")


@pytest.fixture(scope="session")
def linear_ou():
    return builtin_model("linear-ou")


@pytest.fixture(scope="session")
def linear_pure():
    return builtin_model("linear-pure")


@pytest.fixture(scope="session")
def tanh_model():
    return builtin_model("tanh-nonlinear", alpha=0.5)
