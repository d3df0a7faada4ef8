"""Feature transformation, final softmax classifiers and the ZSL/GZSL protocol."""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import torch
from torch import nn
from torch.nn import functional as F

from .errors import DomainError, ShapeError, ValidationError
from .networks import EmbeddingDecoder

VARIANTS = ("orig", "concat_attr", "concat_latent")


@dataclass(frozen=True)
class TransformedFeatures:
    matrix: np.ndarray
    labels: np.ndarray | None
    variant: str

    @property
    def width(self) -> int:
        return int(self.matrix.shape[1])


def transformed_width(d_x: int, d_a: int, hidden: int, variant: str) -> int:
    return d_x + {"orig": 0, "concat_attr": d_a, "concat_latent": hidden}[variant]


@torch.no_grad()
def transform(features, decoder: EmbeddingDecoder | None, variant: str = "concat_latent",
              labels=None) -> TransformedFeatures:
    """``orig`` keeps ``x``; ``concat_attr`` appends ``Dec(x).a_hat``; ``concat_latent`` appends ``Dec(x).h``."""
    if variant not in VARIANTS:
        raise ValueError(f"unknown classifier input {variant!r}")
    x = np.asarray(features)
    if variant == "orig":
        return TransformedFeatures(x, labels, variant)
    if decoder is None:
        raise ValueError(f"variant {variant!r} needs a decoder")
    if x.ndim != 2 or x.shape[1] != decoder.d_x:
        raise ShapeError(f"decoder expects width {decoder.d_x}, features have shape {list(x.shape)}")
    dt = next(decoder.parameters()).dtype
    h, a_hat = decoder(torch.as_tensor(x, dtype=dt))
    extra = h if variant == "concat_latent" else a_hat
    out = np.concatenate([x, extra.numpy().astype(x.dtype, copy=False)], axis=1)
    return TransformedFeatures(out, labels, variant)


class SoftmaxClassifier(nn.Module):
    """Single linear layer over transformed features with one output per class in ``class_ids``."""

    def __init__(self, in_features: int, class_ids, variant: str = "orig", dtype=torch.float32):
        super().__init__()
        self.class_ids = np.asarray(class_ids, dtype=np.int64)
        self.variant = variant
        self.fc = nn.Linear(in_features, self.class_ids.size, dtype=dtype)

    @property
    def n_outputs(self) -> int:
        return self.fc.out_features

    def forward(self, x):
        return self.fc(x)

    @torch.no_grad()
    def predict(self, matrix) -> np.ndarray:
        x = torch.as_tensor(np.asarray(matrix), dtype=self.fc.weight.dtype)
        return self.class_ids[self(x).argmax(dim=1).numpy()]


def train_softmax(transformed, labels, class_set, lr: float = 1e-3, epochs: int = 25, batch_size: int = 64,
                  seed: int = 0, betas=(0.5, 0.999), dtype=torch.float32) -> SoftmaxClassifier:
    """Cross-entropy training of a linear classifier; ``class_set`` fixes the output units."""
    variant = transformed.variant if isinstance(transformed, TransformedFeatures) else "orig"
    matrix = transformed.matrix if isinstance(transformed, TransformedFeatures) else np.asarray(transformed)
    labels = np.asarray(labels, dtype=np.int64)
    class_set = np.unique(np.asarray(class_set, dtype=np.int64))
    outside = np.setdiff1d(labels, class_set)
    if outside.size:
        raise ValidationError(f"labels outside the class set: {outside[:10].tolist()}")
    gen = torch.Generator().manual_seed(seed)
    clf = SoftmaxClassifier(matrix.shape[1], class_set, variant, dtype)
    with torch.no_grad():
        bound = 1.0 / np.sqrt(matrix.shape[1])
        clf.fc.weight.copy_((torch.rand(clf.fc.weight.shape, generator=gen, dtype=torch.float64) * 2 - 1) * bound)
        clf.fc.bias.zero_()
    x = torch.as_tensor(matrix, dtype=dtype)
    y = torch.as_tensor(np.searchsorted(class_set, labels), dtype=torch.long)
    opt = torch.optim.Adam(clf.parameters(), lr=lr, betas=betas)
    n = x.shape[0]
    for _ in range(epochs):
        perm = torch.randperm(n, generator=gen)
        for start in range(0, n, batch_size):
            rows = perm[start:start + batch_size]
            opt.zero_grad()
            F.cross_entropy(clf(x[rows]), y[rows]).backward()
            opt.step()
    return clf


def harmonic_mean(u: float, s: float) -> float:
    if u < 0 or s < 0:
        raise DomainError(f"accuracies must be non-negative, got u={u}, s={s}")
    if u + s == 0:
        return 0.0
    return 2.0 * u * s / (u + s)


def per_class_accuracy(y_true, y_pred, classes) -> dict[int, float]:
    """Accuracy for each class in ``classes`` that has test instances; empty classes are left out."""
    y_true, y_pred = np.asarray(y_true), np.asarray(y_pred)
    out = {}
    for c in np.asarray(classes).tolist():
        mask = y_true == c
        if mask.any():
            out[int(c)] = float(np.mean(y_pred[mask] == c))
    return out


def mean_accuracy(per_class: dict[int, float], classes) -> float:
    vals = [per_class[int(c)] for c in classes if int(c) in per_class]
    return float(np.mean(vals)) if vals else 0.0


@dataclass
class EvalReport:
    per_class_acc: dict[int, float] = field(default_factory=dict)
    zsl_t1: float | None = None
    gzsl_u: float | None = None
    gzsl_s: float | None = None
    gzsl_h: float | None = None
    excluded: list[int] = field(default_factory=list)
    feature_width: int | None = None

    def to_dict(self) -> dict:
        return {
            "zsl_t1": self.zsl_t1,
            "u": self.gzsl_u,
            "s": self.gzsl_s,
            "H": self.gzsl_h,
            "per_class_acc": {str(k): v for k, v in self.per_class_acc.items()},
            "excluded_classes": list(self.excluded),
            "feature_width": self.feature_width,
        }

    def write_json(self, path) -> Path:
        path = Path(path)
        path.write_text(json.dumps(self.to_dict(), indent=2))
        return path

    def write_csv(self, path) -> Path:
        path = Path(path)
        with path.open("w", newline="") as f:
            w = csv.writer(f)
            w.writerow(["class", "accuracy"])
            for k, v in self.per_class_acc.items():
                w.writerow([k, f"{v:.6f}"])
        return path


def _predict(model: SoftmaxClassifier, decoder, features) -> tuple[np.ndarray, int]:
    t = transform(features, decoder, model.variant)
    return model.predict(t.matrix), t.width


def evaluate_zsl(model: SoftmaxClassifier, decoder, features, labels, unseen_classes) -> EvalReport:
    """Per-class top-1 over unseen test instances, classified among unseen classes only."""
    labels = np.asarray(labels)
    pred, width = _predict(model, decoder, features)
    acc = per_class_accuracy(labels, pred, unseen_classes)
    excluded = [int(c) for c in unseen_classes if int(c) not in acc]
    return EvalReport(per_class_acc=acc, zsl_t1=mean_accuracy(acc, unseen_classes), excluded=excluded,
                      feature_width=width)


def evaluate_gzsl(model: SoftmaxClassifier, decoder, seen_features, seen_labels, unseen_features,
                  unseen_labels, seen_classes, unseen_classes) -> EvalReport:
    """u and s are mean per-class accuracies over the joint label space; H their harmonic mean."""
    pred_s, width = _predict(model, decoder, seen_features)
    pred_u, _ = _predict(model, decoder, unseen_features)
    acc = per_class_accuracy(seen_labels, pred_s, seen_classes)
    acc.update(per_class_accuracy(unseen_labels, pred_u, unseen_classes))
    u = mean_accuracy(acc, unseen_classes)
    s = mean_accuracy(acc, seen_classes)
    all_classes = list(seen_classes) + list(unseen_classes)
    excluded = [int(c) for c in all_classes if int(c) not in acc]
    return EvalReport(per_class_acc=acc, gzsl_u=u, gzsl_s=s, gzsl_h=harmonic_mean(u, s), excluded=excluded,
                      feature_width=width)
