import numpy as np
import pytest


class Instance:
    """Random linear-Gaussian assimilation problem with an explicit H matrix.

    Everything an observation-space oracle needs: members ``E``, perturbations
    ``X``, operator ``H``, ``Y = H X``, diagonal ``R`` and innovation ``d``.
    """

    def __init__(self, rng, n, m, L):
        self.n, self.m, self.L = n, m, L
        self.E = rng.normal(size=(n, L)) * rng.uniform(0.5, 2.0, size=(n, 1)) + rng.normal(size=(n, 1))
        self.xbar = self.E.mean(axis=1)
        self.X = self.E - self.xbar[:, None]
        self.H = rng.normal(size=(m, n))
        self.Y = self.H @ self.X
        self.r = rng.uniform(0.3, 3.0, size=m)
        self.R = np.diag(self.r)
        self.Rinv = np.diag(1.0 / self.r)
        self.y = self.H @ self.xbar + rng.normal(size=m) * 2.0
        self.d = self.y - self.H @ self.xbar


def random_instances(seed, count, n_max=10, m_max=8, L_max=6):
    rng = np.random.default_rng(seed)
    out = []
    for _ in range(count):
        n = int(rng.integers(1, n_max + 1))
        m = int(rng.integers(1, m_max + 1))
        L = int(rng.integers(2, L_max + 1))
        out.append(Instance(rng, n, m, L))
    return out


@pytest.fixture
def rng():
    return np.random.default_rng(20240517)
