"""Shared fixtures and the acceptance-criteria summary.

Tests named ``test_criterion_NN_*`` inside test_acceptance.py get one
``[PASS]``/``[FAIL]`` line each in the terminal summary, titled by the
first line of their docstring.
"""

import re

import numpy as np
import pytest

from trapshuttle.model import TransportSpec

_CRITERION_RE = re.compile(r"test_criterion_(\d+)")
_registry: dict[str, dict] = {}


@pytest.fixture(scope="session")
def spec():
    """Transport setting used throughout: Rb-87, 20 Hz trap, 1 cm."""
    return TransportSpec(mass=1.44269e-25, omega0=2.0 * np.pi * 20.0, distance=0.01)


def pytest_collection_modifyitems(config, items):
    for item in items:
        match = _CRITERION_RE.search(item.name)
        if match and item.module.__name__ == "test_acceptance":
            doc = (item.function.__doc__ or "").strip().splitlines()
            _registry[item.nodeid] = {
                "num": int(match.group(1)),
                "title": doc[0] if doc else item.name,
                "outcome": "NOT RUN",
            }


def pytest_runtest_logreport(report):
    entry = _registry.get(report.nodeid)
    if entry is None:
        return
    if report.failed:
        entry["outcome"] = "FAIL"
    elif report.skipped:
        entry["outcome"] = "SKIP"
    elif report.when == "call" and report.passed and entry["outcome"] == "NOT RUN":
        entry["outcome"] = "PASS"


def pytest_terminal_summary(terminalreporter):
    if not _registry:
        return
    tr = terminalreporter
    tr.section("acceptance criteria")
    for entry in sorted(_registry.values(), key=lambda e: e["num"]):
        mark = {"PASS": "green", "FAIL": "red"}.get(entry["outcome"], "yellow")
        tr.write(f"criterion {entry['num']:>2}: ", bold=True)
        tr.write(f"[{entry['outcome']}] ", **{mark: True})
        tr.line(entry["title"])
