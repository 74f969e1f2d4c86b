"""Shared fixtures and the per-criterion acceptance summary."""
from __future__ import annotations

from collections import defaultdict

import pytest

from kpparse import synth
from kpparse.pipeline import PipelineConfig

_outcomes: dict[int, list[str]] = defaultdict(list)
_criterion_of: dict[str, int] = {}


def pytest_collection_modifyitems(items):
    for item in items:
        marker = item.get_closest_marker("criterion")
        if marker is not None:
            _criterion_of[item.nodeid] = int(marker.args[0])


def pytest_runtest_logreport(report):
    n = _criterion_of.get(report.nodeid)
    if n is None:
        return
    if report.when == "call" or (report.when == "setup" and not report.passed):
        _outcomes[n].append(report.outcome)


def pytest_terminal_summary(terminalreporter):
    if not _outcomes:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(_outcomes):
        res = _outcomes[n]
        passed = sum(r == "passed" for r in res)
        status = "PASS" if passed == len(res) else "FAIL"
        terminalreporter.write_line(f"criterion {n}: {status} ({passed}/{len(res)} checks passed)")


@pytest.fixture(scope="session")
def synth_samples():
    return synth.make_dataset(count=6, size=128, seed=3)


@pytest.fixture(scope="session")
def default_config():
    return PipelineConfig()
