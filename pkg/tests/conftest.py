import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from trajstd.synthetic import braking_scene, crossing_scene, free_flow_scene, random_scene  # noqa: E402


@pytest.fixture
def small_scene():
    return random_scene(4, 25.0, 4.0, seed=3)


@pytest.fixture
def braking():
    return braking_scene()


@pytest.fixture
def crossing():
    return crossing_scene()


@pytest.fixture
def free_flow():
    return free_flow_scene()


def pytest_terminal_summary(terminalreporter):
    try:
        from test_acceptance import ACCEPTANCE_RESULTS
    except ImportError:
        return
    if not ACCEPTANCE_RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(ACCEPTANCE_RESULTS):
        status, title, detail, elapsed = ACCEPTANCE_RESULTS[n]
        terminalreporter.write_line(f"[{status}] {n}. {title} ({elapsed:.2f} s): {detail}")
