"""Shared fixtures and the acceptance summary printed at the end of a run."""

from __future__ import annotations

import numpy as np
import pytest

_CRITERIA: dict[str, tuple[bool, str]] = {}


def record_criterion(name: str, passed: bool, detail: str = "") -> None:
    prev = _CRITERIA.get(name)
    # a criterion made of several checks passes only if all of them do
    if prev is not None:
        passed = passed and prev[0]
        detail = "; ".join(d for d in (prev[1], detail) if d)
    _CRITERIA[name] = (passed, detail)


@pytest.fixture
def criterion(request):
    """Record a named acceptance criterion; a test failure marks it failed."""
    names = []

    def _mark(name: str, detail: str = ""):
        names.append((name, detail))

    yield _mark
    failed = request.node.rep_call.failed if hasattr(request.node, "rep_call") else True
    for name, detail in names:
        record_criterion(name, not failed, detail)


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    if rep.when == "call":
        item.rep_call = rep


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for name, (ok, detail) in sorted(_CRITERIA.items()):
        line = f"{'PASS' if ok else 'FAIL'}  {name}"
        if detail:
            line += f"  ({detail})"
        terminalreporter.write_line(line)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
