import sys
from pathlib import Path

import numpy as np
import pytest
import scipy.sparse as sp

sys.path.insert(0, str(Path(__file__).parent))

from cabcd.sparse import CsrMatrix  # noqa: E402

PARSE_EXAMPLE = "1 1:0.5 3:2.0\n-1 2:1.0"


def random_instance(d, n, density=0.2, seed=0):
    """Seeded sparse X (d x n, no empty rows or columns) and labels y."""
    rng = np.random.default_rng(seed)
    S = sp.random(d, n, density=density, random_state=rng, format="lil")
    for i in range(d):             # keep every feature and data point non-empty
        S[i, rng.integers(n)] = rng.standard_normal()
    for j in range(n):
        S[rng.integers(d), j] = rng.standard_normal()
    X = CsrMatrix.from_scipy(S.tocsr())
    y = rng.standard_normal(n)
    return X, X.toarray(), y


@pytest.fixture
def small_problem():
    return random_instance(12, 40, 0.3, seed=7)


@pytest.fixture
def diag2():
    X = CsrMatrix.from_dense([[1.0, 0.0], [0.0, 2.0]])
    return X, np.array([1.0, 1.0])


def pytest_terminal_summary(terminalreporter):
    mod = sys.modules.get("test_acceptance")
    if mod is None or not mod.RESULTS:
        return
    terminalreporter.section("acceptance")
    for line in mod.summary_lines():
        terminalreporter.write_line(line)
