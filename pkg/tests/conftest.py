"""Shared fixtures: trained pipeline pieces are expensive, built once."""
import numpy as np
import pytest
import torch

from dummynet.experiment import (
    build_mask_training_set,
    build_pipeline,
    make_experiment_data,
)
from dummynet.mask_estimator import train_mask_estimator

torch.set_num_threads(2)


@pytest.fixture(scope="session")
def mask_training_pairs():
    rng = np.random.default_rng(11)
    return build_mask_training_set(rng, 220, 64, 2.0)


@pytest.fixture(scope="session")
def trained_mask_state(mask_training_pairs):
    return train_mask_estimator(mask_training_pairs[:180], epochs=25, seed=0)


@pytest.fixture(scope="session")
def toy_artifacts(trained_mask_state):
    """Full trained pipeline on the synthetic corpus."""
    return build_pipeline(seed=0, mask_state=trained_mask_state)


@pytest.fixture(scope="session")
def experiment_data():
    return make_experiment_data(seed=0)
