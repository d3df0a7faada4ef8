"""Scalar training objectives: VAE terms, WGAN-GP terms, cycle consistency and their sums."""

from __future__ import annotations

import torch
from torch.nn import functional as F

from .errors import DomainError, GradientUnavailableError, NumericError, ShapeError


def kl_term(mu, logvar):
    """KL(N(mu, exp(logvar)) || N(0, 1)), summed over latent dims and averaged over the batch."""
    if mu.shape != logvar.shape:
        raise ShapeError(f"kl_term: {list(mu.shape)} vs {list(logvar.shape)}")
    if not (torch.isfinite(mu).all() and torch.isfinite(logvar).all()):
        raise NumericError("kl_term received non-finite inputs")
    per_row = -0.5 * torch.sum(1 + logvar - mu.pow(2) - logvar.exp(), dim=1)
    return per_row.mean()


def reconstruction_term(x_hat, x):
    """Binary cross-entropy summed over feature dims, averaged over the batch."""
    if x_hat.shape != x.shape:
        raise ShapeError(f"reconstruction_term: {list(x_hat.shape)} vs {list(x.shape)}")
    if (x < 0).any() or (x > 1).any():
        raise DomainError("reconstruction targets must lie in [0, 1]")
    return F.binary_cross_entropy(x_hat, x, reduction="sum") / x.shape[0]


def interpolate(x, x_hat, eps):
    """Rows on the segment between ``x`` and ``x_hat``; ``eps`` has one draw per row."""
    # written as an offset so x == x_hat gives x back exactly
    return x_hat + eps[:, None] * (x - x_hat)


def gradient_penalty(critic, x, x_hat, a=None, eps=None, generator: torch.Generator | None = None):
    """Mean of ``(||grad critic(x_tilde)||_2 - 1)^2`` over interpolates ``x_tilde``.

    The graph is kept so the result can be differentiated again with respect to
    the critic parameters. ``lambda`` is applied by the caller.
    """
    if x.shape != x_hat.shape:
        raise ShapeError(f"gradient_penalty: {list(x.shape)} vs {list(x_hat.shape)}")
    if eps is None:
        eps = torch.rand(x.shape[0], generator=generator, dtype=x.dtype)
    x_tilde = interpolate(x.detach(), x_hat.detach(), eps).requires_grad_(True)
    scores = critic(x_tilde) if a is None else critic(x_tilde, a)
    if not isinstance(scores, torch.Tensor):
        raise GradientUnavailableError(f"critic returned {type(scores).__name__}, not a differentiable tensor")
    grad = None
    if scores.requires_grad:
        (grad,) = torch.autograd.grad(scores.sum(), x_tilde, create_graph=True, allow_unused=True)
    if grad is None:
        # output independent of the input: the gradient is identically zero
        grad = torch.zeros_like(x_tilde)
    return ((grad.norm(2, dim=1) - 1) ** 2).mean()


def critic_loss(critic, x, x_hat, a=None, lambda_gp=10.0, eps=None, generator=None):
    """Critic objective as a minimisation: E[D(x_hat)] - E[D(x)] + lambda * GP."""
    real = critic(x) if a is None else critic(x, a)
    fake = critic(x_hat) if a is None else critic(x_hat, a)
    gp = gradient_penalty(critic, x, x_hat, a, eps=eps, generator=generator)
    return fake.mean() - real.mean() + lambda_gp * gp


def generator_adv_loss(critic, x_hat, a=None):
    scores = critic(x_hat) if a is None else critic(x_hat, a)
    return -scores.mean()


def cycle_loss(decoder, x, x_hat, a):
    """L1 embedding reconstruction for real and synthesized features.

    ``decoder`` maps features to ``(h, a_hat)``; either feature batch may be
    ``None`` to drop its term.
    """
    total = 0.0
    for feats in (x, x_hat):
        if feats is None:
            continue
        _, a_hat = decoder(feats)
        total = total + (a_hat - a).abs().sum(dim=1).mean()
    return total


def total_vae_gan(kl, recon, gen_adv, alpha):
    return (kl + recon) + alpha * gen_adv


def total_with_cycle(vaegan, cycle, beta):
    return vaegan + beta * cycle
