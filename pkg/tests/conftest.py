import numpy as np
import pytest

from precision_minmax.data import generate_synthetic_classification, partition_equal
from precision_minmax.problems import (build_auc_maximization, build_robust_regression,
                                       build_synthetic_saddle)


@pytest.fixture(scope="session")
def regression_small():
    ds = generate_synthetic_classification(30, 4, seed=3)
    return build_robust_regression(partition_equal(ds, 3, seed=3), None, 3)


@pytest.fixture(scope="session")
def auc_small():
    ds = generate_synthetic_classification(40, 4, seed=5)
    return build_auc_maximization(partition_equal(ds, 4, seed=5), None, 4)


@pytest.fixture(scope="session")
def synthetic_small():
    return build_synthetic_saddle(3, 8, 4, 3, seed=7)


def interior_point(problem, rng, scale=1.0):
    """Random point strictly inside the boxes (Gaussian on unbounded coordinates)."""
    def draw(box):
        lo, hi = box.lower, box.upper
        fin = np.isfinite(lo) & np.isfinite(hi)
        z = scale * rng.standard_normal(box.dim)
        u = rng.uniform(0.05, 0.95, box.dim)
        return np.where(fin, np.where(fin, lo, 0) + u * np.where(fin, hi - lo, 0), z)
    return draw(problem.x_box), draw(problem.y_box)


# Acceptance results, filled by tests/test_acceptance.py and echoed at the end of the run.
ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
