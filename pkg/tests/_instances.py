"""Shared small instances for the test modules."""

import numpy as np

from landingopt.manifold import StiefelParams, random_stiefel
from landingopt.objectives import PcaObjective
from landingopt.rng import Rng

SMALL_SPECTRUM = (1.0, 0.55, 0.05, 0.04, 0.03, 0.02, 0.01, 0.0)


def small_pca(seed=3):
    """d=8, r=2 PCA instance with eigengap 0.5 between the 2nd and 3rd eigenvalues."""
    q = random_stiefel(Rng(seed), StiefelParams(8, 8))
    c = (q * np.array(SMALL_SPECTRUM)) @ q.T
    return PcaObjective(0.5 * (c + c.T), [1.0, 0.5], meta={"test": "small", "seed": seed})


def quad2():
    """f(x) = -x^T diag(2, 1) x on St(2, 1)."""
    return PcaObjective(np.diag([2.0, 1.0]), [1.0])
