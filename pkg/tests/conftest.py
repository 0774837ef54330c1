import pytest

from ins_sim.model import NarrativeSystem
from ins_sim.storyio import bundled_lrrh

ACCEPTANCE_LINES: list[str] = []


@pytest.fixture(scope="session")
def lrrh_doc():
    return bundled_lrrh()


@pytest.fixture(scope="session")
def lrrh(lrrh_doc):
    return lrrh_doc.to_system()


@pytest.fixture(scope="session")
def lrrh_model(lrrh_doc):
    return lrrh_doc.player_model()


@pytest.fixture
def chain():
    return NarrativeSystem.build(
        ["s0", "s1", "s2"], {"a1": "action", "a2": "action"},
        [("s0", "a1", "s1"), ("s1", "a2", "s2")], "s0", ["s2"],
    )


@pytest.fixture
def fork():
    """s0 -a1-> s1 (goal), s0 -e1-> s2 (problematic)."""
    return NarrativeSystem.build(
        ["s0", "s1", "s2"], {"a1": "action", "e1": "event"},
        [("s0", "a1", "s1"), ("s0", "e1", "s2")], "s0", ["s1"],
    )


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
