import numpy as np
import pytest

from domain.dataset import DatasetBundle, generate_synthetic, split_associations
from domain.models import TrainConfig


@pytest.fixture
def tiny_bundle() -> DatasetBundle:
    """6 drugs x 5 diseases with 9 planted positives."""
    return generate_synthetic(6, 5, 3, 0.3, 0.0, seed=7).as_bundle()


@pytest.fixture
def tiny_split(tiny_bundle):
    return split_associations(tiny_bundle.associations, 0.7, seed=0)


@pytest.fixture
def small_bundle() -> DatasetBundle:
    """30 drugs x 25 diseases with 75 planted positives."""
    return generate_synthetic(30, 25, 4, 0.1, 0.0, seed=3).as_bundle()


@pytest.fixture
def make_config():
    def build(**overrides) -> TrainConfig:
        values = {
            "latent_dim": 3,
            "epochs": 3,
            "negatives_per_positive": 2,
            "batch_size": 8,
            "neighbor_k": 2,
            "learning_rate": 0.01,
            "seed": 0,
        }
        values.update(overrides)
        return TrainConfig.model_validate(values)

    return build


@pytest.fixture
def rng() -> np.random.Generator:
    return np.random.default_rng(1234)
