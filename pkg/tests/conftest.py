"""Shared fixtures: a small synthetic dataset and matching normalizer."""

import numpy as np
import pytest

from lsdm.normalize import fit_normalizer
from lsdm.synthetic import SyntheticConfig, generate_synthetic


@pytest.fixture(scope="session")
def small_dataset():
    return generate_synthetic(SyntheticConfig(num_users=4, weeks=1, seed=7))


@pytest.fixture(scope="session")
def small_normalizer(small_dataset):
    return fit_normalizer(small_dataset)


@pytest.fixture()
def rng():
    return np.random.default_rng(0)
