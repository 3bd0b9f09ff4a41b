import numpy as np
import pytest

from beliefmix import (
    FactorGraph,
    Potentials,
    BpConfig,
    CountingNumbers,
    run_bp,
    run_gbp,
)


@pytest.fixture(scope="session", autouse=True)
def warm_kernels():
    # first call pays numba compilation; keep it out of timed tests
    edges = np.array([[0, 1], [0, 2], [1, 2]], dtype=np.int64)
    g = FactorGraph(3, edges)
    pots = Potentials(np.ones((3, 2)), np.ones((3, 2, 2)), edges)
    cfg = BpConfig(max_iters=5, tol=1e-6)
    run_bp(g, pots, cfg)
    run_gbp(g, pots, CountingNumbers.standard(g), cfg)
    yield
