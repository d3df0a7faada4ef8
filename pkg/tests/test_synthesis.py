import dataclasses

import numpy as np
import pytest
import torch

from tfvaegan.errors import ValidationError
from tfvaegan.networks import TFVAEGAN
from tfvaegan.synthesis import synthesize


@pytest.fixture
def attributes():
    return np.random.default_rng(0).uniform(size=(7, 4))


def test_counts_and_balance(tiny_model, attributes):
    out = synthesize(tiny_model, attributes, [1, 2, 3, 4, 5], 50)
    assert len(out) == 250 and out.features.shape == (250, 6) and out.latents.shape == (250, 8)
    assert np.bincount(out.labels, minlength=7).tolist() == [0, 50, 50, 50, 50, 50, 0]


def test_features_in_open_interval(tiny_model, attributes):
    out = synthesize(tiny_model, attributes, [0, 6], 100)
    assert (out.features > 0).all() and (out.features < 1).all()


def test_fixed_seed(tiny_model, attributes):
    a = synthesize(tiny_model, attributes, [0, 3], 20, seed=4)
    b = synthesize(tiny_model, attributes, [0, 3], 20, seed=4)
    c = synthesize(tiny_model, attributes, [0, 3], 20, seed=5)
    assert np.array_equal(a.features, b.features) and np.array_equal(a.latents, b.latents)
    assert not np.array_equal(a.features, c.features)


def test_delta_zero_matches_plain_generation(tiny_config, attributes):
    model = TFVAEGAN(tiny_config)
    cfg0 = dataclasses.replace(tiny_config, delta=0.0)
    base = dataclasses.replace(tiny_config, feedback_loops=0)
    assert np.array_equal(synthesize(model, attributes, [1, 2], 30, cfg0, seed=2).features,
                          synthesize(model, attributes, [1, 2], 30, base, seed=2).features)


def test_feedback_pass_uses_the_same_noise(tiny_model, attributes):
    g = torch.Generator().manual_seed(9)
    out = synthesize(tiny_model, attributes, [2, 4], 15, generator=g)
    ref = torch.Generator().manual_seed(9)
    z = torch.randn(30, tiny_model.config.d_z, generator=ref)
    # exactly K x d_z normal draws were consumed
    assert torch.equal(g.get_state(), ref.get_state())
    with torch.no_grad():
        a = torch.as_tensor(attributes[out.labels], dtype=torch.float32)
        x0 = tiny_model.generate(z, a)
        x1 = tiny_model.generate(z, a, tiny_model.feedback_transform(tiny_model.decode(x0)[0]))
    assert np.array_equal(out.features, x1.numpy())
    assert np.array_equal(out.latents, tiny_model.decode(x1)[0].detach().numpy())


def test_unknown_class(tiny_model, attributes):
    with pytest.raises(ValidationError):
        synthesize(tiny_model, attributes, [0, 7], 3)
