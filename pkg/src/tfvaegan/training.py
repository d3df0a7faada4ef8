"""Optimisation schedule: critic, generator/VAE and feedback/decoder updates."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Iterable

import numpy as np
import torch
from torch import nn

from . import losses
from .data import ZSLDataset
from .errors import CompatibilityError, StateError, TrainingAborted, ValidationError
from .networks import TFVAEGAN, ModelConfig, reparameterize, save_checkpoint

OPTIMIZER_GROUPS = {
    "vae": ("encoder", "generator"),
    "discriminator": ("discriminator",),
    "discriminator2": ("discriminator2",),
    "decoder": ("decoder",),
    "feedback": ("feedback",),
}


@dataclass
class Batch:
    """One minibatch of seen training data plus optional transductive inputs."""

    x: torch.Tensor
    a: torch.Tensor
    unlabeled: torch.Tensor | None = None
    unseen_attributes: torch.Tensor | None = None

    def __len__(self):
        return self.x.shape[0]


@dataclass
class TrainState:
    model: TFVAEGAN
    optimizers: dict[str, torch.optim.Optimizer]
    rng: torch.Generator
    epoch: int = 0
    iteration: int = 0
    feedback_t: int = 0
    phase: str = "alternating"
    history: dict[str, list[float]] = field(default_factory=dict)
    records: list[dict] = field(default_factory=list)
    steps: list[str] = field(default_factory=list)

    @property
    def config(self) -> ModelConfig:
        return self.model.config

    def log(self, name: str, value: float):
        self.history.setdefault(name, []).append(value)

    def save(self, path):
        return save_checkpoint(self.model, path, {"epoch": self.epoch, "iteration": self.iteration})


def init_state(config: ModelConfig, model: TFVAEGAN | None = None) -> TrainState:
    model = model or TFVAEGAN(config)
    groups = model.groups()
    optimizers = {}
    for name, members in OPTIMIZER_GROUPS.items():
        params = [p for m in members if m in groups for p in groups[m].parameters()]
        if params:
            optimizers[name] = torch.optim.Adam(params, lr=config.group_lr(name), betas=(config.adam_beta1, config.adam_beta2))
    rng = torch.Generator().manual_seed(config.seed)
    return TrainState(model=model, optimizers=optimizers, rng=rng)


def _params(modules: Iterable[nn.Module]) -> list[torch.Tensor]:
    return [p for m in modules for p in m.parameters()]


def _update(state: TrainState, groups: dict[str, tuple[Iterable[nn.Module], torch.Tensor]]):
    """Step each optimizer group on its own loss; all other parameters stay put.

    Every gradient is computed before any parameter moves, so groups sharing
    one graph see consistent values.
    """
    pending = []
    items = list(groups.items())
    for i, (group, (modules, loss)) in enumerate(items):
        params = _params(modules)
        grads = torch.autograd.grad(loss, params, allow_unused=True, retain_graph=i < len(items) - 1)
        pending.append((group, params, grads))
    for group, params, grads in pending:
        for p, g in zip(params, grads):
            p.grad = torch.zeros_like(p) if g is None else g
        state.optimizers[group].step()
        for p in params:
            p.grad = None


def _check_finite(state: TrainState, name: str, value: torch.Tensor) -> float:
    v = float(value.detach())
    if not math.isfinite(v):
        raise TrainingAborted(name, state.iteration, v)
    return v


def active_loops(state: TrainState) -> int:
    """Feedback refinements in use: none while pre-training the generator."""
    return 0 if state.phase == "pretrain" else state.config.feedback_loops


def _noise(state: TrainState, n: int) -> torch.Tensor:
    c = state.config
    return torch.randn(n, c.d_z, generator=state.rng, dtype=c.torch_dtype)


def _sample_rows(state: TrainState, pool: torch.Tensor, n: int) -> torch.Tensor:
    idx = torch.randint(pool.shape[0], (n,), generator=state.rng)
    return pool[idx]


def _require_transductive(batch: Batch, model: TFVAEGAN):
    if batch.unlabeled is None or batch.unseen_attributes is None:
        raise ValidationError("transductive steps need unlabeled features and unseen-class attributes")
    if model.discriminator2 is None:
        raise StateError("transductive steps need the unconditional critic")


def critic_step(state: TrainState, batch: Batch, config: ModelConfig | None = None) -> TrainState:
    config = config or state.config
    model = state.model
    if len(batch) == 0:
        raise ValidationError("empty batch")
    loops = active_loops(state)
    with torch.no_grad():
        x_hat = model.refine(_noise(state, len(batch)), batch.a, loops)
    loss = losses.critic_loss(model.discriminator, batch.x, x_hat, batch.a, config.lambda_gp, generator=state.rng)
    _update(state, {"discriminator": ([model.discriminator], loss)})
    state.log("critic", _check_finite(state, "critic", loss))
    state.steps.append("critic")

    if config.mode == "transductive":
        _require_transductive(batch, model)
        xu = batch.unlabeled
        with torch.no_grad():
            au = _sample_rows(state, batch.unseen_attributes, xu.shape[0])
            xu_hat = model.refine(_noise(state, xu.shape[0]), au, loops)
        loss2 = config.d2_weight * losses.critic_loss(
            model.discriminator2, xu, xu_hat, None, config.lambda_gp, generator=state.rng
        )
        _update(state, {"discriminator2": ([model.discriminator2], loss2)})
        state.log("critic2", _check_finite(state, "critic2", loss2))
    return state


def generator_losses(model: TFVAEGAN, batch: Batch, config: ModelConfig, rng: torch.Generator,
                     loops: int) -> dict[str, torch.Tensor]:
    """All generator-side loss terms for one batch, drawing noise from ``rng``."""
    recon = gen_adv = cycle = 0.0
    k = config.recon_samples
    mu, logvar = model.encode(batch.x, batch.a)
    kl = losses.kl_term(mu, logvar)
    for _ in range(k):
        eps = torch.randn(mu.shape, generator=rng, dtype=mu.dtype)
        x_hat = model.refine(reparameterize(mu, logvar, eps), batch.a, loops)
        recon = recon + losses.reconstruction_term(x_hat, batch.x) / k
        gen_adv = gen_adv + losses.generator_adv_loss(model.discriminator, x_hat, batch.a) / k
        cycle = cycle + losses.cycle_loss(model.decoder, batch.x, x_hat, batch.a) / k
    vaegan = losses.total_vae_gan(kl, recon, gen_adv, config.alpha)
    out = {"kl": kl, "recon": recon, "gen_adv": gen_adv, "cycle": cycle}
    if config.mode == "transductive":
        _require_transductive(batch, model)
        au = batch.unseen_attributes[torch.randint(batch.unseen_attributes.shape[0], (len(batch),), generator=rng)]
        zu = torch.randn(len(batch), config.d_z, generator=rng, dtype=mu.dtype)
        gen_adv2 = losses.generator_adv_loss(model.discriminator2, model.refine(zu, au, loops))
        vaegan = vaegan + config.alpha * config.d2_weight * gen_adv2
        out["gen_adv2"] = gen_adv2
    out["total"] = losses.total_with_cycle(vaegan, cycle, config.beta)
    return out


def generator_step(state: TrainState, batch: Batch, config: ModelConfig | None = None) -> TrainState:
    config = config or state.config
    model = state.model
    if len(batch) == 0:
        raise ValidationError("empty batch")
    terms = generator_losses(model, batch, config, state.rng, active_loops(state))
    for name, value in terms.items():
        state.log(name, _check_finite(state, name, value))
    groups = {"vae": ([model.encoder, model.generator], terms["total"])}
    if config.dec_in_generator_step:
        groups["decoder"] = ([model.decoder], config.beta * terms["cycle"])
    _update(state, groups)
    state.steps.append("generator")
    return state


def feedback_losses(model: TFVAEGAN, batch: Batch, config: ModelConfig, rng: torch.Generator,
                    loops: int) -> dict[str, torch.Tensor]:
    z = torch.randn(len(batch), config.d_z, generator=rng, dtype=batch.x.dtype)
    if loops == 0:
        with torch.no_grad():
            x_hat = model.generate(z, batch.a)
        cycle = losses.cycle_loss(model.decoder, batch.x, x_hat, batch.a)
        return {"fb_cycle": cycle, "fb_total": config.beta * cycle}
    # first sub-iteration x[0] = G(z, a); each further one feeds F(h(x[t])) back with the same z
    x_hat = model.refine(z, batch.a, loops)
    gen_adv = losses.generator_adv_loss(model.discriminator, x_hat, batch.a)
    cycle = losses.cycle_loss(model.decoder, batch.x, x_hat, batch.a)
    total = config.alpha * gen_adv + config.beta * cycle
    out = {"fb_gen_adv": gen_adv, "fb_cycle": cycle}
    if config.mode == "transductive":
        _require_transductive(batch, model)
        au = batch.unseen_attributes[torch.randint(batch.unseen_attributes.shape[0], (len(batch),), generator=rng)]
        zu = torch.randn(len(batch), config.d_z, generator=rng, dtype=batch.x.dtype)
        gen_adv2 = losses.generator_adv_loss(model.discriminator2, model.refine(zu, au, loops))
        total = total + config.alpha * config.d2_weight * gen_adv2
        out["fb_gen_adv2"] = gen_adv2
    out["fb_total"] = total
    return out


def feedback_step(state: TrainState, batch: Batch, config: ModelConfig | None = None) -> TrainState:
    """Update F and Dec with G frozen. Without feedback loops only Dec is trained."""
    config = config or state.config
    model = state.model
    if len(batch) == 0:
        raise ValidationError("empty batch")
    loops = active_loops(state)
    if loops > 0 and model.feedback is None:
        raise StateError("feedback_loops > 0 but the feedback module is not initialised")
    terms = feedback_losses(model, batch, config, state.rng, loops)
    for name, value in terms.items():
        state.log(name, _check_finite(state, name, value))
    # F follows the adversarial + cycle objective; Dec is fitted by its cycle loss
    groups = {"decoder": ([model.decoder], config.beta * terms["fb_cycle"])}
    if loops > 0:
        groups["feedback"] = ([model.feedback], terms["fb_total"])
    _update(state, groups)
    state.feedback_t = loops
    state.steps.append("feedback")
    return state


# ---------------------------------------------------------------------------
# full training loop


class _Data:
    """Tensors drawn from the dataset once; test splits are read only where the mode permits."""

    def __init__(self, dataset: ZSLDataset, config: ModelConfig):
        dt = config.torch_dtype
        idx = np.asarray(dataset.train_seen)
        if idx.size == 0:
            raise ValidationError("train_seen split is empty")
        self.x = torch.as_tensor(np.asarray(dataset.features[idx]), dtype=dt)
        labels = torch.as_tensor(np.asarray(dataset.labels[idx]), dtype=torch.long)
        attributes = torch.as_tensor(np.asarray(dataset.attributes), dtype=dt)
        self.a = attributes[labels]
        self.unseen_attributes = attributes[torch.as_tensor(np.asarray(dataset.unseen_classes), dtype=torch.long)]
        self.unlabeled = None
        if config.mode == "transductive":
            # features only; test labels are never touched
            self.unlabeled = torch.as_tensor(np.asarray(dataset.features[np.asarray(dataset.test_unseen)]), dtype=dt)
            if self.unlabeled.shape[0] == 0:
                raise ValidationError("transductive mode needs unlabeled test_unseen features")

    def __len__(self):
        return self.x.shape[0]

    def batch(self, rows: torch.Tensor, state: TrainState) -> Batch:
        unlabeled = None
        if self.unlabeled is not None:
            unlabeled = _sample_rows(state, self.unlabeled, rows.shape[0])
        return Batch(self.x[rows], self.a[rows], unlabeled, self.unseen_attributes)

    def random_batch(self, n: int, state: TrainState) -> Batch:
        rows = torch.randperm(len(self), generator=state.rng)[:n]
        return self.batch(rows, state)


def _run_epoch(state: TrainState, data: _Data, callback, feedback_only: bool = False):
    c = state.config
    perm = torch.randperm(len(data), generator=state.rng)
    for start in range(0, len(data), c.batch_size):
        rows = perm[start:start + c.batch_size]
        crit_start = len(state.history.get("critic", []))
        for _ in range(c.n_critic):
            critic_step(state, data.random_batch(len(rows), state))
        batch = data.batch(rows, state)
        if not feedback_only:
            generator_step(state, batch)
        # with no loops and beta == 0 neither F nor Dec has an objective
        if active_loops(state) > 0 or c.beta > 0:
            feedback_step(state, batch)
        state.iteration += 1
        record = {"iteration": state.iteration, "epoch": state.epoch, "phase": state.phase,
                  "critic": float(np.mean(state.history["critic"][crit_start:]))}
        for name, values in state.history.items():
            if name != "critic" and name != "critic2" and values:
                record[name] = values[-1]
        if "critic2" in state.history:
            record["critic2"] = float(np.mean(state.history["critic2"][-c.n_critic:]))
        state.records.append(record)
        if callback is not None:
            callback(record)


def train(dataset: ZSLDataset, config: ModelConfig, checkpoint_path=None,
          callback: Callable[[dict], None] | None = None) -> tuple[TrainState, object]:
    """Train all networks on ``dataset``; returns the final state and the checkpoint path (if requested).

    ``alternating``: every iteration runs ``n_critic`` critic steps, one
    generator step and one feedback step. ``two_stage``: the generator is first
    trained without feedback, then frozen while F (and the critic) train.
    """
    if dataset.n_features != config.d_x or dataset.n_attributes != config.d_a:
        raise CompatibilityError(
            f"config expects d_x={config.d_x}, d_a={config.d_a}; data has "
            f"d_x={dataset.n_features}, d_a={dataset.n_attributes}"
        )
    state = init_state(config)
    data = _Data(dataset, config)
    if config.strategy == "alternating":
        state.phase = "alternating"
        for epoch in range(config.epochs):
            state.epoch = epoch
            _run_epoch(state, data, callback)
    else:
        state.phase = "pretrain"
        for epoch in range(config.epochs):
            state.epoch = epoch
            _run_epoch(state, data, callback)
        if config.feedback_loops > 0:
            state.phase = "feedback"
            for epoch in range(config.epochs, config.epochs + config.phase2_epochs):
                state.epoch = epoch
                _run_epoch(state, data, callback, feedback_only=True)
    if config.epochs > 0:
        state.epoch += 1
    path = state.save(checkpoint_path) if checkpoint_path is not None else None
    return state, path


def epoch_means(state: TrainState, term: str) -> dict[int, float]:
    """Mean of a per-iteration loss term grouped by epoch."""
    out: dict[int, list[float]] = {}
    for rec in state.records:
        if term in rec:
            out.setdefault(rec["epoch"], []).append(rec[term])
    return {k: float(np.mean(v)) for k, v in out.items()}
