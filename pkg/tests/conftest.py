import numpy as np
import pytest

from watune.datagen import (
    IN_DISTRIBUTION_PROFILE,
    DatasetConfig,
    generate_dataset,
    split,
)
from watune.measurement import LinkModelConfig
from watune.reward import RewardConfig


@pytest.fixture(scope="session")
def small_dataset():
    """16 scenarios x 100 steps: big enough for training smoke tests."""
    cfg = DatasetConfig(logs_per_session=100, seed=1)
    return generate_dataset(IN_DISTRIBUTION_PROFILE, LinkModelConfig(), cfg, RewardConfig())


@pytest.fixture(scope="session")
def small_split(small_dataset):
    rng = np.random.default_rng([1, 9973])
    return split(small_dataset, 0.8, rng)
