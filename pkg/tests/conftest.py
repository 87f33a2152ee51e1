import logging
import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from floret.floret import synthesize_floret  # noqa: E402
from floret.topologies import gen_kite, gen_mesh, gen_smallworld  # noqa: E402
from floret.workloads import bundled_models, bundled_queues  # noqa: E402

logging.getLogger("floret").setLevel(logging.ERROR)


@pytest.fixture(scope="session")
def floret10():
    """The 100-chiplet, six-petal design with default search settings."""
    return synthesize_floret(10, 10, 6, seed=0)


@pytest.fixture(scope="session")
def baselines10():
    return {"mesh": gen_mesh(10, 10), "kite": gen_kite(10, 10, 0), "smallworld": gen_smallworld(10, 10, 0)}


@pytest.fixture(scope="session")
def topos10(floret10, baselines10):
    return {"floret": floret10, **baselines10}


@pytest.fixture(scope="session")
def models():
    return bundled_models("paper")


@pytest.fixture(scope="session")
def queues(models):
    return bundled_queues(models)


ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1])):
            terminalreporter.write_line(line)
