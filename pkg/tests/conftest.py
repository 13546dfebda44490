import numpy as np
import pytest

from falsibench.core import LaggedAdjacency, Series


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def var1_series(coefs: np.ndarray, t: int, seed: int = 0, burn: int = 100) -> Series:
    """Plain VAR(1) simulation used as an independent data source in tests."""
    rng = np.random.default_rng(seed)
    k = coefs.shape[0]
    x = np.zeros((t + burn, k))
    for s in range(1, t + burn):
        x[s] = coefs @ x[s - 1] + rng.standard_normal(k)
    return Series(x[burn:])


@pytest.fixture
def chain_var():
    k = 4
    a = 0.5 * np.eye(k)
    for i in range(1, k):
        a[i, i - 1] = 0.5
    truth = LaggedAdjacency((a != 0) & ~np.eye(k, dtype=bool))
    return var1_series(a, 600, seed=3), truth, a
