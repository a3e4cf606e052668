import numpy as np
import pytest

from dspm.decomp import Decomposition

ACCEPTANCE: list[tuple[str, bool, str]] = []


def record(criterion: str, passed: bool, detail: str) -> None:
    """Remember one acceptance line; printed now and again in the summary."""
    ACCEPTANCE.append((criterion, passed, detail))
    print(f"{'PASS' if passed else 'FAIL'} {criterion}: {detail}")


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for name, ok, detail in ACCEPTANCE:
        terminalreporter.write_line(f"{'PASS' if ok else 'FAIL'} {name}: {detail}")


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def quad_map():
    """100x100 four-quadrant map."""
    lab = np.zeros((100, 100), dtype=np.int64)
    lab[:50, 50:] = 1
    lab[50:, :50] = 2
    lab[50:, 50:] = 3
    return lab


@pytest.fixture
def grid_decomp():
    """12x12 image of nine 4x4 squares with distinct colors."""
    lab = np.repeat(np.repeat(np.arange(9).reshape(3, 3), 4, 0), 4, 1)
    colors = np.array([[i * 25, 255 - i * 20, (i * 70) % 256] for i in range(9)], dtype=np.uint8)
    return Decomposition.from_labels(lab, colors[lab])
