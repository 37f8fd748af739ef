from __future__ import annotations

import math

import pytest

from dicert.cli import load_or_build_curve
from dicert.selftest import BoundCurve, default_budget, smoke_budget

ACCEPTANCE: dict[int, tuple[bool, str]] = {}


def record(criterion: int, passed: bool, detail: str) -> None:
    ACCEPTANCE[criterion] = (bool(passed), detail)


def pytest_terminal_summary(terminalreporter) -> None:
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(ACCEPTANCE):
        ok, detail = ACCEPTANCE[k]
        terminalreporter.write_line(f"criterion {k}: {'PASS' if ok else 'FAIL'} - {detail}")


@pytest.fixture(scope="session")
def curve_cache(tmp_path_factory):
    return tmp_path_factory.mktemp("curve-cache")


@pytest.fixture(scope="session")
def chsh_curve(curve_cache) -> BoundCurve:
    return load_or_build_curve("chsh", None, default_budget(2), 60, curve_cache)[0]


@pytest.fixture(scope="session")
def cnot_smoke_curve(curve_cache) -> BoundCurve:
    """Reduced-budget curve for the controlled-NOT (gate angle pi)."""
    return load_or_build_curve("cuphi", math.pi / 2, smoke_budget(), 20, curve_cache)[0]
