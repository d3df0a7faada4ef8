import numpy as np
import pytest
import torch

from tfvaegan.data import make_synthetic, scale_dataset
from tfvaegan.networks import TFVAEGAN, ModelConfig


@pytest.fixture
def tiny_dataset():
    ds, _ = make_synthetic(seed=0, n_seen_classes=4, n_unseen_classes=2, d_a=4, d_x=6, samples_per_class=10)
    return scale_dataset(ds)[0]


@pytest.fixture
def tiny_config():
    return ModelConfig(d_x=6, d_a=4, hidden=8, epochs=1, batch_size=8, n_critic=2, syn_num=5,
                       cls_epochs=2, seed=0)


@pytest.fixture
def tiny_model(tiny_config):
    return TFVAEGAN(tiny_config)


def double_config(**kw):
    values = dict(d_x=5, d_a=3, hidden=6, dtype="float64", init_std=0.5, seed=0)
    values.update(kw)
    return ModelConfig(**values)


@pytest.fixture
def rng():
    return np.random.default_rng(0)


@pytest.fixture(autouse=True)
def _torch_seed():
    torch.manual_seed(0)
