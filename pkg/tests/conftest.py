import numpy as np
import pytest

from hysst.core import SolutionPair

GAMMA = 9.81


def random_pair(rng, n=2, m=1, max_jumps=3, max_samples=6):
    """Piecewise arc with random interval lengths, sample counts and values."""
    t, j = [0.0], [0]
    n_jumps = int(rng.integers(0, max_jumps + 1))
    now = 0.0
    for jj in range(n_jumps + 1):
        if jj > 0:
            t.append(now)
            j.append(jj)
        for _ in range(int(rng.integers(0, max_samples))):
            now += float(rng.uniform(0.01, 1.0))
            t.append(now)
            j.append(jj)
    x = rng.normal(size=(len(t), n))
    u = rng.normal(size=(len(t), m))
    return SolutionPair.from_samples(t, j, x, u)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
