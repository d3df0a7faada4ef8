"""Encoder, generator, critics, embedding decoder and feedback module."""

from __future__ import annotations

import json
import zipfile
from dataclasses import asdict, dataclass, fields
from pathlib import Path
from typing import Literal

import numpy as np
import torch
from torch import nn
from torch.nn import functional as F

from .data import DTYPES, decode_array, dtype_tag
from .errors import CompatibilityError, FormatError, ShapeError, StateError

Mode = Literal["inductive", "transductive"]
FeedbackSource = Literal["decoder", "discriminator"]
Strategy = Literal["alternating", "two_stage"]
ClassifierInput = Literal["orig", "concat_attr", "concat_latent"]

_CHOICES = {
    "mode": ("inductive", "transductive"),
    "feedback_source": ("decoder", "discriminator"),
    "strategy": ("alternating", "two_stage"),
    "classifier_input": ("orig", "concat_attr", "concat_latent"),
    "dtype": ("float32", "float64"),
}


@dataclass
class ModelConfig:
    d_x: int = 2048
    d_a: int = 312
    d_z: int | None = None  # defaults to d_a
    hidden: int = 4096
    alpha: float = 10.0
    beta: float = 0.01
    delta: float = 1.0
    lambda_gp: float = 10.0
    lr: float = 1e-4
    adam_beta1: float = 0.5
    adam_beta2: float = 0.999
    n_critic: int = 5
    batch_size: int = 64
    epochs: int = 30
    feedback_epochs: int | None = None  # second phase of two_stage; defaults to epochs
    syn_num: int = 300
    leaky_slope: float = 0.2
    mode: Mode = "inductive"
    feedback_source: FeedbackSource = "decoder"
    strategy: Strategy = "alternating"
    classifier_input: ClassifierInput = "concat_latent"
    feedback_loops: int = 1
    recon_samples: int = 1
    d2_weight: float = 1.0
    dec_in_generator_step: bool = False
    synthesize_seen: bool = False
    cls_lr: float | None = None  # defaults to lr
    feedback_lr: float | None = None  # defaults to lr
    decoder_lr: float | None = None  # defaults to lr
    cls_epochs: int = 25
    cls_batch_size: int = 64
    init_std: float = 0.02
    dtype: str = "float32"
    seed: int = 0

    def __post_init__(self):
        if self.d_z is None:
            self.d_z = self.d_a
        self.validate()

    def validate(self) -> "ModelConfig":
        if self.d_z != self.d_a:
            raise ValueError(f"d_z ({self.d_z}) must equal d_a ({self.d_a})")
        for name in ("alpha", "beta", "delta", "lambda_gp", "d2_weight"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be >= 0")
        for name in ("d_x", "d_a", "hidden", "n_critic", "batch_size", "recon_samples", "cls_batch_size"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be >= 1")
        for name in ("epochs", "feedback_loops", "cls_epochs", "syn_num"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be >= 0")
        for name in ("lr", "cls_lr", "feedback_lr", "decoder_lr"):
            value = getattr(self, name)
            if value is not None and value <= 0:
                raise ValueError(f"{name} must be > 0")
        for name, allowed in _CHOICES.items():
            if getattr(self, name) not in allowed:
                raise ValueError(f"{name} must be one of {allowed}, got {getattr(self, name)!r}")
        return self

    @property
    def torch_dtype(self) -> torch.dtype:
        return torch.float64 if self.dtype == "float64" else torch.float32

    @property
    def classifier_lr(self) -> float:
        return self.lr if self.cls_lr is None else self.cls_lr

    def group_lr(self, group: str) -> float:
        """Learning rate of one optimizer group; F and Dec may override the shared rate."""
        override = {"feedback": self.feedback_lr, "decoder": self.decoder_lr}.get(group)
        return self.lr if override is None else override

    @property
    def phase2_epochs(self) -> int:
        return self.epochs if self.feedback_epochs is None else self.feedback_epochs

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, values: dict) -> "ModelConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(values) - known
        if unknown:
            raise ValueError(f"unknown config field(s): {sorted(unknown)}")
        return cls(**values)


def _check_width(t: torch.Tensor, width: int, what: str):
    if t.dim() != 2 or t.shape[1] != width:
        raise ShapeError(f"{what}: expected [B, {width}], got {list(t.shape)}")


def _check_batch(*tensors: torch.Tensor):
    sizes = {t.shape[0] for t in tensors}
    if len(sizes) != 1:
        raise ShapeError(f"batch sizes differ: {sorted(sizes)}")


class Encoder(nn.Module):
    def __init__(self, d_x, d_a, d_z, hidden, slope=0.2):
        super().__init__()
        self.d_x, self.d_a = d_x, d_a
        self.fc1 = nn.Linear(d_x + d_a, hidden)
        self.mu = nn.Linear(hidden, d_z)
        self.logvar = nn.Linear(hidden, d_z)
        self.slope = slope

    def forward(self, x, a):
        _check_width(x, self.d_x, "encoder features")
        _check_width(a, self.d_a, "encoder attributes")
        _check_batch(x, a)
        h = F.leaky_relu(self.fc1(torch.cat([x, a], dim=1)), self.slope)
        return self.mu(h), self.logvar(h)


class Generator(nn.Module):
    """Two-layer generator whose hidden activation accepts an additive feedback term."""

    def __init__(self, d_z, d_a, d_x, hidden, slope=0.2):
        super().__init__()
        self.d_z, self.d_a, self.hidden = d_z, d_a, hidden
        self.fc1 = nn.Linear(d_z + d_a, hidden)
        self.fc2 = nn.Linear(hidden, d_x)
        self.slope = slope

    def hidden_layer(self, z, a):
        _check_width(z, self.d_z, "generator noise")
        _check_width(a, self.d_a, "generator attributes")
        _check_batch(z, a)
        return F.leaky_relu(self.fc1(torch.cat([z, a], dim=1)), self.slope)

    def forward(self, z, a, feedback=None, delta=1.0):
        g = self.hidden_layer(z, a)
        if feedback is not None:
            _check_width(feedback, self.hidden, "generator feedback")
            _check_batch(z, feedback)
            # delta == 0 leaves g untouched so the output matches the no-feedback path bit for bit
            if delta != 0:
                g = g + delta * feedback
        return torch.sigmoid(self.fc2(g))


class Critic(nn.Module):
    """WGAN critic. Conditional when ``d_a > 0``; exposes its hidden layer for feedback."""

    def __init__(self, d_x, d_a, hidden, slope=0.2):
        super().__init__()
        self.d_x, self.d_a = d_x, d_a
        self.fc1 = nn.Linear(d_x + d_a, hidden)
        self.fc2 = nn.Linear(hidden, 1)
        self.slope = slope

    @property
    def conditional(self) -> bool:
        return self.d_a > 0

    def hidden_layer(self, x, a=None):
        _check_width(x, self.d_x, "critic features")
        if self.conditional:
            if a is None:
                raise ShapeError("conditional critic needs attributes")
            _check_width(a, self.d_a, "critic attributes")
            _check_batch(x, a)
            x = torch.cat([x, a], dim=1)
        return F.leaky_relu(self.fc1(x), self.slope)

    def forward(self, x, a=None):
        return self.fc2(self.hidden_layer(x, a)).squeeze(1)


class EmbeddingDecoder(nn.Module):
    """Maps features back to class embeddings; ``h`` is the post-activation hidden layer."""

    def __init__(self, d_x, d_a, hidden, slope=0.2):
        super().__init__()
        self.d_x = d_x
        self.fc1 = nn.Linear(d_x, hidden)
        self.fc2 = nn.Linear(hidden, d_a)
        self.slope = slope

    def forward(self, x):
        _check_width(x, self.d_x, "decoder features")
        h = F.leaky_relu(self.fc1(x), self.slope)
        return h, self.fc2(h)


class FeedbackModule(nn.Module):
    def __init__(self, hidden, slope=0.2):
        super().__init__()
        self.hidden = hidden
        self.fc1 = nn.Linear(hidden, hidden)
        self.fc2 = nn.Linear(hidden, hidden)
        self.slope = slope

    def forward(self, h):
        _check_width(h, self.hidden, "feedback input")
        h = F.leaky_relu(self.fc1(h), self.slope)
        return F.leaky_relu(self.fc2(h), self.slope)


class TFVAEGAN(nn.Module):
    """All trainable networks of the model, created from a :class:`ModelConfig`."""

    def __init__(self, config: ModelConfig, seed: int | None = None):
        super().__init__()
        self.config = config
        c = config
        gen = torch.Generator().manual_seed(c.seed if seed is None else seed)
        self.encoder = Encoder(c.d_x, c.d_a, c.d_z, c.hidden, c.leaky_slope)
        self.generator = Generator(c.d_z, c.d_a, c.d_x, c.hidden, c.leaky_slope)
        self.discriminator = Critic(c.d_x, c.d_a, c.hidden, c.leaky_slope)
        self.discriminator2 = Critic(c.d_x, 0, c.hidden, c.leaky_slope) if c.mode == "transductive" else None
        self.decoder = EmbeddingDecoder(c.d_x, c.d_a, c.hidden, c.leaky_slope)
        self.feedback = FeedbackModule(c.hidden, c.leaky_slope)
        self.to(c.torch_dtype)
        init_weights(self, c.init_std, gen)

    # thin forward wrappers, named after the operations they perform

    def encode(self, x, a):
        return self.encoder(x, a)

    def generate(self, z, a, feedback=None, delta=None):
        return self.generator(z, a, feedback, self.config.delta if delta is None else delta)

    def discriminate(self, x, a):
        return self.discriminator(x, a)

    def discriminate_unconditional(self, x):
        if self.discriminator2 is None:
            raise StateError("unconditional critic exists only in transductive mode")
        return self.discriminator2(x)

    def decode(self, x):
        return self.decoder(x)

    def feedback_transform(self, h):
        if self.feedback is None:
            raise StateError("feedback module is not initialised")
        return self.feedback(h)

    def feedback_latent(self, x, a, source: str | None = None):
        """Latent fed to the feedback module: the decoder's ``h`` or the critic's hidden layer."""
        source = source or self.config.feedback_source
        if source == "discriminator":
            return self.discriminator.hidden_layer(x, a)
        return self.decoder(x)[0]

    def refine(self, z, a, loops: int, delta: float | None = None, source: str | None = None):
        """Generate from ``(z, a)`` and apply ``loops`` feedback refinements with the same ``z``."""
        x_hat = self.generate(z, a)
        if loops > 0 and self.feedback is None:
            raise StateError("feedback_loops > 0 but the feedback module is not initialised")
        for _ in range(loops):
            fb = self.feedback(self.feedback_latent(x_hat, a, source))
            x_hat = self.generate(z, a, fb, delta)
        return x_hat

    def groups(self) -> dict[str, nn.Module]:
        out = {
            "encoder": self.encoder,
            "generator": self.generator,
            "discriminator": self.discriminator,
            "decoder": self.decoder,
            "feedback": self.feedback,
        }
        if self.discriminator2 is not None:
            out["discriminator2"] = self.discriminator2
        return {k: v for k, v in out.items() if v is not None}


def init_weights(module: nn.Module, std: float, generator: torch.Generator):
    """Normal(0, std) weights and zero biases, drawn from ``generator`` in a fixed order."""
    with torch.no_grad():
        for m in module.modules():
            if isinstance(m, nn.Linear):
                m.weight.copy_(torch.randn(m.weight.shape, generator=generator, dtype=torch.float64) * std)
                m.bias.zero_()


def reparameterize(mu, logvar, eps):
    if mu.shape != logvar.shape or mu.shape != eps.shape:
        raise ShapeError(f"reparameterize: shapes differ {list(mu.shape)}, {list(logvar.shape)}, {list(eps.shape)}")
    return mu + torch.exp(0.5 * logvar) * eps


# ---------------------------------------------------------------------------
# checkpoints: a zip holding manifest.json (config echo + array table) and raw arrays

_EPOCH = (1980, 1, 1, 0, 0, 0)


def save_checkpoint(model: TFVAEGAN, path, extra: dict | None = None) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    entries, blobs = [], []
    for name, tensor in model.state_dict().items():
        arr = tensor.detach().cpu().numpy()
        tag = dtype_tag(arr)
        fname = f"{name}.bin"
        entries.append({"name": name, "dtype": tag, "shape": list(arr.shape), "path": fname})
        blobs.append((fname, np.ascontiguousarray(arr, dtype=DTYPES[tag]).tobytes()))
    manifest = {"config": model.config.to_dict(), "arrays": entries}
    manifest.update(extra or {})
    with zipfile.ZipFile(path, "w", compression=zipfile.ZIP_STORED) as zf:
        zf.writestr(zipfile.ZipInfo("manifest.json", _EPOCH), json.dumps(manifest, indent=2, sort_keys=True))
        for fname, raw in blobs:
            zf.writestr(zipfile.ZipInfo(fname, _EPOCH), raw)
    return path


def load_checkpoint(path) -> tuple[TFVAEGAN, dict]:
    path = Path(path)
    if not path.is_file():
        raise FormatError(f"checkpoint not found: {path}")
    try:
        zf = zipfile.ZipFile(path)
    except zipfile.BadZipFile as exc:
        raise FormatError(f"{path}: not a checkpoint archive") from exc
    with zf:
        try:
            manifest = json.loads(zf.read("manifest.json"))
        except KeyError as exc:
            raise FormatError(f"{path}: missing manifest.json") from exc
        for key in ("config", "arrays"):
            if key not in manifest:
                raise FormatError(f"{path}: manifest missing field '{key}'")
        config = ModelConfig.from_dict(manifest["config"])
        model = TFVAEGAN(config)
        state = {}
        for entry in manifest["arrays"]:
            state[entry["name"]] = torch.from_numpy(decode_array(entry, zf.read(entry["path"])))
    expected = set(model.state_dict())
    if set(state) != expected:
        raise CompatibilityError(f"{path}: parameter names do not match the configured architecture")
    model.load_state_dict(state)
    return model, manifest


def check_compatible(config: ModelConfig, d_x: int, d_a: int):
    if config.d_x != d_x or config.d_a != d_a:
        raise CompatibilityError(
            f"checkpoint expects d_x={config.d_x}, d_a={config.d_a}; data has d_x={d_x}, d_a={d_a}"
        )
