import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from rps.analysis import prepare  # noqa: E402
from rps.basis import RpsSolver  # noqa: E402
from rps.coeff import CoeffSpec  # noqa: E402

ROOT = Path(__file__).resolve().parents[1]


@pytest.fixture(scope="session")
def small2d():
    """N_c = 8, two refinements, oscillatory field."""
    coarse, fine, a = prepare(2, 8, 2, CoeffSpec.trig_multiscale_2d())
    return RpsSolver(coarse, fine, a)


@pytest.fixture(scope="session")
def small1d():
    coarse, fine, a = prepare(1, 16, 3, CoeffSpec.random_fourier_1d(seed=3))
    return RpsSolver(coarse, fine, a)


@pytest.fixture(scope="session")
def configs_dir():
    return ROOT / "configs"


ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
