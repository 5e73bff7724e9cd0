import numpy as np
import pytest
from hypothesis import settings

from doublephase.grid import ScalarField

settings.register_profile("default", deadline=None, max_examples=50)
settings.load_profile("default")


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def ramp_field(n: int, spacing: float = None) -> ScalarField:
    """``u(x, y) = x`` sampled at cell corners ``j h`` on ``[0, 1]^2``."""
    h = 1.0 / n if spacing is None else spacing
    x = np.arange(n) * h
    return ScalarField(np.tile(x, (n, 1)), h)


def step_field(n: int, height: float = 1.0, spacing: float = 1.0) -> ScalarField:
    v = np.zeros((n, n))
    v[:, n // 2:] = height
    return ScalarField(v, spacing)


ACCEPTANCE_LINES: dict = {}


def record_criterion(number: int, name: str, ok: bool, detail: str) -> None:
    line = f"criterion {number:2d} {'PASS' if ok else 'FAIL'}  {name}: {detail}"
    ACCEPTANCE_LINES[number] = line
    print(line)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for number in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(ACCEPTANCE_LINES[number])
