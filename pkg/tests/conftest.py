import math

import numpy as np
import pytest

from ppmide.grid import GridDataset, build_quadrature
from ppmide.kernels import Params
from ppmide.simulation import fit_replicate, preset

DESK_REPLICATES = 30


def random_dataset(rng, n=50, p=2, q=1, beta=None, alpha=None):
    """Random gridded data generated from the thinned model itself."""
    x = rng.standard_normal((n, p))
    z = rng.standard_normal((n, q))
    beta = np.r_[0.0, 0.5 * rng.standard_normal(p)] if beta is None else np.asarray(beta)
    alpha = 0.5 * rng.standard_normal(q) if alpha is None else np.asarray(alpha)
    lam = np.exp(beta[0] + x @ beta[1:]) / (1 + np.exp(-(z @ alpha)))
    counts = rng.poisson(lam)
    if counts.sum() == 0:
        counts[0] = 1
    return GridDataset(tuple(range(n)), counts, x, z)


def random_params(rng, p=2, q=1, scale=0.5):
    return Params(scale * rng.standard_normal(p + 1), scale * rng.standard_normal(q))


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def small_quad(rng):
    ds = random_dataset(rng, n=50)
    return ds, build_quadrature(ds)


class DeskRuns:
    """Lazily computed desk-scale simulation study shared across test modules."""

    def __init__(self):
        self._cache = {}

    def get(self, name):
        if name not in self._cache:
            sc = preset(name)
            self._cache[name] = [fit_replicate(sc, r) for r in range(DESK_REPLICATES)]
        return self._cache[name]

    @staticmethod
    def estimates(runs, estimator):
        if estimator == "MLE":
            return np.array([r.mle.params.beta for r in runs])
        return np.array([r.selection.best_fit.params.beta for r in runs])

    @staticmethod
    def selected_taus(runs):
        return np.array([r.selection.best[0] for r in runs])


@pytest.fixture(scope="session")
def desk_runs():
    return DeskRuns()


INF = math.inf
