from __future__ import annotations

from pathlib import Path

import pytest

from feedbench.synthetic import mock_gateway, synthetic_cases

FIXTURES = Path(__file__).parent / "fixtures"

# acceptance criterion number -> (title, passed)
ACCEPTANCE: dict[int, tuple[str, bool]] = {}


@pytest.fixture
def fixtures_dir() -> Path:
    return FIXTURES


@pytest.fixture
def gateway():
    return mock_gateway(parallelism=2)


@pytest.fixture(scope="session")
def cases():
    return synthetic_cases()


def pytest_runtest_makereport(item, call):
    marker = item.get_closest_marker("criterion")
    if marker is None or call.when != "call":
        return
    number, title = marker.args
    ACCEPTANCE[number] = (title, call.excinfo is None)


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(number, title): acceptance criterion")


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(ACCEPTANCE):
        title, ok = ACCEPTANCE[number]
        terminalreporter.write_line(f"criterion {number:>2}: {'PASS' if ok else 'FAIL'}  {title}")
