import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from incoherence import Policy, builtin_example  # noqa: E402


@pytest.fixture
def mountain():
    return builtin_example("mountain_race")


@pytest.fixture
def counter():
    return builtin_example("temperature_counter")


@pytest.fixture
def tree():
    return builtin_example("stability_tree")


@pytest.fixture
def uniform():
    return Policy.uniform


def fig2_policy(m):
    """The fixpoint policy drawn with edge labels 4/7, 3/7, 1, 0, 1/2, 1/2."""
    return Policy.uniform(m).with_rows(m, {
        "start": {"up": 4 / 7, "down": 3 / 7},
        "mountain": {"up": 1.0, "down": 0.0},
        "forest": {"up": 0.5, "down": 0.5},
    })


def pytest_terminal_summary(terminalreporter):
    module = sys.modules.get("test_acceptance")
    lines = getattr(module, "RESULTS", [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)
