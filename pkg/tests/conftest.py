from __future__ import annotations

import warnings
from pathlib import Path

import pytest

from risnoma.config import grid_from, load_config

ROOT = Path(__file__).resolve().parent.parent
MAPS = ROOT / "maps"


@pytest.fixture(scope="session")
def full_grid():
    return grid_from(load_config(profile="paper"))


@pytest.fixture(scope="session")
def desk_grid():
    return grid_from(load_config(profile="desk"))


@pytest.fixture(scope="session")
def client():
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        from fastapi.testclient import TestClient
    from risnoma.service import create_app
    return TestClient(create_app())


# one line per acceptance criterion, filled in by test_acceptance.py
ACCEPTANCE: dict[int, tuple[bool, str]] = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(ACCEPTANCE):
        ok, detail = ACCEPTANCE[n]
        terminalreporter.write_line(f"criterion {n}: {'PASS' if ok else 'FAIL'}  {detail}")
