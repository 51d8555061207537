import numpy as np
import pytest
from hypothesis import strategies as st

from ddqpt.qstate import density_from_bloch


@st.composite
def bloch_vectors(draw, max_norm=1.0):
    v = np.array(draw(st.tuples(*[st.floats(-1, 1, allow_nan=False)] * 3)))
    n = np.linalg.norm(v)
    if n > max_norm:
        v = v * (max_norm / n)
    return tuple(float(x) for x in v)


@st.composite
def density_matrices(draw):
    return density_from_bloch(draw(bloch_vectors()))


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def random_states(rng, n):
    out = []
    for _ in range(n):
        v = rng.normal(size=3)
        v *= rng.uniform() ** (1 / 3) / np.linalg.norm(v)
        out.append(density_from_bloch(v))
    return out


# one line per acceptance criterion, printed at the end of the session
ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
