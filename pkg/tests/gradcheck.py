"""Central finite-difference reference for parameter gradients."""

import torch


def finite_difference(loss_fn, params, step=1e-4):
    # grad mode stays on: the penalty differentiates the critic inside loss_fn
    grads = []
    for p in params:
        num = torch.zeros_like(p)
        flat, out = p.detach().view(-1), num.view(-1)
        for i in range(flat.numel()):
            orig = flat[i].item()
            flat[i] = orig + step
            plus = loss_fn().item()
            flat[i] = orig - step
            minus = loss_fn().item()
            flat[i] = orig
            out[i] = (plus - minus) / (2 * step)
        grads.append(num)
    return grads


def relative_errors(loss_fn, params, step=1e-4):
    """Norm-wise relative error between autograd and finite differences, one per parameter tensor."""
    params = list(params)
    analytic = torch.autograd.grad(loss_fn(), params, allow_unused=True)
    analytic = [torch.zeros_like(p) if g is None else g for p, g in zip(params, analytic)]
    numeric = finite_difference(loss_fn, params, step)
    errs = []
    for g, n in zip(analytic, numeric):
        scale = max(g.norm().item(), n.norm().item())
        errs.append(0.0 if scale < 1e-10 else (g - n).norm().item() / scale)
    return errs


def gradient_cases():
    """(name, loss_fn, params) for every loss term on a float64 model with dims <= 8."""
    from tfvaegan import losses
    from tfvaegan.networks import TFVAEGAN, ModelConfig, reparameterize
    from tfvaegan.training import Batch, feedback_losses, generator_losses

    cfg = ModelConfig(d_x=5, d_a=3, hidden=6, dtype="float64", init_std=0.5, seed=0, mode="transductive")
    m = TFVAEGAN(cfg)
    g = torch.Generator().manual_seed(1)
    dt = torch.float64
    x = torch.rand(4, 5, generator=g, dtype=dt) * 0.8 + 0.1
    a = torch.rand(4, 3, generator=g, dtype=dt)
    eps = torch.randn(4, 3, generator=g, dtype=dt)
    z = torch.randn(4, 3, generator=g, dtype=dt)
    gp_eps = torch.rand(4, generator=g, dtype=dt)
    x_fixed = torch.rand(4, 5, generator=g, dtype=dt)
    xu = torch.rand(4, 5, generator=g, dtype=dt)
    batch = Batch(x, a, unlabeled=xu, unseen_attributes=a[:2] * 0.5)
    p = lambda *mods: [q for mod in mods for q in mod.parameters()]

    def recon():
        mu, logvar = m.encode(x, a)
        return losses.reconstruction_term(m.generate(reparameterize(mu, logvar, eps), a), x)

    return [
        ("kl", lambda: losses.kl_term(*m.encode(x, a)), p(m.encoder)),
        ("reconstruction", recon, p(m.encoder, m.generator)),
        ("generator_adv", lambda: losses.generator_adv_loss(m.discriminator, m.generate(z, a), a),
         p(m.generator, m.discriminator)),
        ("gradient_penalty", lambda: losses.gradient_penalty(m.discriminator, x, x_fixed, a, eps=gp_eps),
         p(m.discriminator)),
        ("critic_loss", lambda: losses.critic_loss(m.discriminator, x, x_fixed, a, 10.0, eps=gp_eps),
         p(m.discriminator)),
        ("critic2_loss", lambda: losses.critic_loss(m.discriminator2, xu, x_fixed, None, 10.0, eps=gp_eps),
         p(m.discriminator2)),
        ("cycle", lambda: losses.cycle_loss(m.decoder, x, m.generate(z, a), a), p(m.decoder, m.generator)),
        ("feedback_refined", lambda: feedback_losses(m, batch, cfg, torch.Generator().manual_seed(2), 1)["fb_total"],
         p(m.feedback, m.decoder)),
        ("generator_total", lambda: generator_losses(m, batch, cfg, torch.Generator().manual_seed(3), 1)["total"],
         p(m.encoder, m.generator, m.feedback)),
    ]
