import numpy as np
import pytest
from hypothesis import strategies as st

from lse.game_core import GameInstance

ACCEPTANCE_LINES = []


def record_acceptance(line):
    ACCEPTANCE_LINES.append(line)


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for line in ACCEPTANCE_LINES:
        terminalreporter.write_line(line)


def random_game(rng, m, n, extended=False):
    return GameInstance(rng.random((m, n)), rng.random((m, n)), extended_range=extended)


@st.composite
def games(draw, max_m=5, max_n=5):
    m = draw(st.integers(2, max_m))
    n = draw(st.integers(2, max_n))
    seed = draw(st.integers(0, 2**32 - 1))
    return random_game(np.random.default_rng(seed), m, n)


@st.composite
def simplex_points(draw, m, floor=0.0):
    seed = draw(st.integers(0, 2**32 - 1))
    x = np.random.default_rng(seed).dirichlet(np.ones(m))
    return floor + (1 - m * floor) * x


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
