from pathlib import Path

import numpy as np
import pytest

from dualboot.bisg import (
    CensusBundle,
    GeoPriorTable,
    SurnameTable,
    VarianceReplicates,
)
from dualboot.rng import substream

FIXTURES = Path(__file__).parent / "fixtures"


@pytest.fixture(scope="session")
def fixtures_dir():
    return FIXTURES


def build_bundle(seed=0, n_geoids=10, races=("maj", "min"), min_geoids=(1, 4, 7)):
    """Small two-race census bundle with a partially-zero minority column."""
    rng = substream(seed, 0)
    geoids = [f"G{i:03d}" for i in range(n_geoids)]
    k = len(races)
    counts = np.zeros((n_geoids, k))
    counts[:, 0] = rng.integers(50, 200, n_geoids).astype(float)
    for g in min_geoids:
        counts[g, 1] = float(rng.integers(10, 60))
    moes = np.where(counts > 0, 1.645 * np.sqrt(counts + 1.0), 6.0)
    reps = np.zeros((n_geoids, 80, k))
    for r in range(k):
        nz = counts[:, r] > 0
        noise = rng.standard_normal((int(nz.sum()), 80))
        noise *= np.sqrt(counts[nz, r] + 1.0)[:, None]
        reps[nz, :, r] = np.clip(np.rint(counts[nz, r][:, None] + noise), 0.0, None)
    priors = GeoPriorTable(geoids, counts, moes, counts.sum(axis=1), races)
    vreps = VarianceReplicates(geoids, reps, races)
    table = SurnameTable(
        ["SMITH", "GARCIA", "COMMON"],
        np.array([500.0, 200.0, 800.0]),
        np.array([[0.9, 0.1], [0.2, 0.8], [0.7, 0.3]]),
        races,
    )
    return CensusBundle(priors, vreps, table)


@pytest.fixture
def small_bundle():
    return build_bundle()
