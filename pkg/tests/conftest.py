import itertools

import numpy as np
import pytest

from triad.multiway import QadDecomposition


def random_qad(rng, dims, r, *, positive=True):
    """Seeded q-ad with well-conditioned factors and distinct columns."""
    gen = (lambda s: rng.uniform(0.1, 1.0, s)) if positive else rng.standard_normal
    factors = tuple(gen((k, r)) for k in dims)
    weights = rng.uniform(0.5, 1.5, r)
    return QadDecomposition(factors, weights)


def best_permutation(est, truth):
    """Column permutation of ``est`` closest to ``truth`` (max abs error)."""
    r = truth.shape[1]
    best = min(itertools.permutations(range(r)), key=lambda p: np.max(np.abs(est[:, list(p)] - truth)))
    return list(best)


@pytest.fixture
def rng():
    return np.random.default_rng(20240601)
