import numpy as np
import pytest
from hypothesis import strategies as st

from sivcnot.circuit import builtin_gate_circuit


def random_qudit(rng: np.random.Generator) -> np.ndarray:
    v = rng.normal(size=4) + 1j * rng.normal(size=4)
    return v / np.linalg.norm(v)


def random_pairs(n: int, seed: int) -> list[tuple[np.ndarray, np.ndarray]]:
    rng = np.random.default_rng(seed)
    return [(random_qudit(rng), random_qudit(rng)) for _ in range(n)]


finite = st.floats(-1.0, 1.0, allow_nan=False, allow_infinity=False)


@st.composite
def qudits(draw):
    re = np.array([draw(finite) for _ in range(4)])
    im = np.array([draw(finite) for _ in range(4)])
    v = re + 1j * im
    n = np.linalg.norm(v)
    if n < 1e-3:
        v = np.array([1, 0, 0, 0], dtype=complex)
        n = 1.0
    return v / n


@pytest.fixture(scope="session")
def gate_circuit():
    return builtin_gate_circuit()


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def pytest_terminal_summary(terminalreporter):
    import sys

    mod = sys.modules.get("test_acceptance")
    if mod is None or not mod.RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for line in mod.summary_lines():
        terminalreporter.write_line(line)
