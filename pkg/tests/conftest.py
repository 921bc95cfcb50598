import numpy as np
import pytest

from prethermal.lattice import DisorderModel, LatticeConfig, extract_cluster, generate_lattice, sample_disorder


def random_cluster(n_spins, seed, variance=None, abundance=0.01, extent=8):
    """``n_spins`` nearest the centre of a random lattice, with disorder."""
    lat = generate_lattice(LatticeConfig(abundance=abundance, supercell_extent=extent, rng_seed=seed))
    model = DisorderModel(rng_seed=seed + 1) if variance is None else DisorderModel(variance, rng_seed=seed + 1)
    return extract_cluster(sample_disorder(lat, model), n_spins)


@pytest.fixture
def cluster6():
    return random_cluster(6, 11)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
