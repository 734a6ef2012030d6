import pytest
from hypothesis import settings

from attikit.control import ControlLaw
from attikit.experiments import make_tumble_config
from attikit.sim import simulate_batch

settings.register_profile("attikit", deadline=None, max_examples=200)
settings.load_profile("attikit")


@pytest.fixture(scope="session")
def tumble300():
    """The three laws from 300 degrees about the seed-7 axis, sampled at 1 kHz."""
    laws = (ControlLaw.BENCHMARK, ControlLaw.SEA1, ControlLaw.SEA2)
    cfgs = [make_tumble_config(300, law, 7) for law in laws]
    return dict(zip(laws, simulate_batch(cfgs)))


ACCEPTANCE_LINES = []


def record_acceptance(line: str) -> None:
    ACCEPTANCE_LINES.append(line)
    print(line)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
