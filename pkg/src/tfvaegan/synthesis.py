"""Labelled feature synthesis from a trained model."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import torch

from .errors import ValidationError
from .networks import TFVAEGAN, ModelConfig


@dataclass(frozen=True)
class SynthesizedSet:
    features: np.ndarray  # K x d_x, in (0, 1)
    labels: np.ndarray  # K
    latents: np.ndarray  # K x hidden, decoder h of each feature

    def __len__(self):
        return self.labels.shape[0]


@torch.no_grad()
def synthesize(model: TFVAEGAN, attributes, class_ids, n_per_class: int, config: ModelConfig | None = None,
               seed: int = 0, generator: torch.Generator | None = None) -> SynthesizedSet:
    """Draw ``n_per_class`` features for each class in ``class_ids``.

    One noise vector ``z`` is drawn per sample and reused for the initial and
    the feedback-refined generator pass. Feedback is applied once when the
    config enables feedback loops; with ``delta == 0`` it has no effect.
    """
    config = config or model.config
    attributes = np.asarray(attributes)
    class_ids = np.asarray(class_ids, dtype=np.int64).reshape(-1)
    bad = class_ids[(class_ids < 0) | (class_ids >= attributes.shape[0])]
    if bad.size:
        raise ValidationError(f"unknown class id(s): {sorted(set(bad.tolist()))}")
    dt = config.torch_dtype
    labels = np.repeat(class_ids, n_per_class)
    a = torch.as_tensor(attributes[labels], dtype=dt)
    rng = generator if generator is not None else torch.Generator().manual_seed(seed)
    z = torch.randn(labels.size, config.d_z, generator=rng, dtype=dt)

    x_hat = model.generate(z, a)
    if config.feedback_loops > 0:
        fb = model.feedback_transform(model.feedback_latent(x_hat, a, config.feedback_source))
        x_hat = model.generate(z, a, fb, config.delta)
    h, _ = model.decode(x_hat)
    return SynthesizedSet(
        features=x_hat.numpy(),
        labels=labels,
        latents=h.numpy(),
    )
