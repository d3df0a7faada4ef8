"""End-to-end experiment: scale, train, synthesize, classify, report."""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass
from typing import Callable, Iterable

import numpy as np
import torch

from .classify import EvalReport, evaluate_gzsl, evaluate_zsl, train_softmax, transform
from .data import FeatureScaler, ZSLDataset, scale_dataset
from .networks import TFVAEGAN, ModelConfig
from .synthesis import synthesize
from .training import TrainState, train


# small-scale settings used for the synthetic benchmark; F and Dec keep the default rate
DESK_SCALE = {"hidden": 256, "epochs": 30, "lr": 1e-3, "feedback_lr": 1e-4, "decoder_lr": 1e-4,
              "batch_size": 32, "init_std": 0.05}

# {column: config overrides}
ABLATIONS = {
    "Baseline": {"feedback_loops": 0, "beta": 0.0, "classifier_input": "orig"},
    "Feedback": {"feedback_loops": 1, "classifier_input": "orig"},
    "T-feature": {"feedback_loops": 0, "classifier_input": "concat_latent"},
    "TF-VAEGAN": {"feedback_loops": 1, "classifier_input": "concat_latent"},
}
FEEDBACK_ABLATIONS = {
    "TwoStage+D": {"strategy": "two_stage", "feedback_source": "discriminator", "feedback_loops": 1,
                   "classifier_input": "orig"},
    "TwoStage+Dec": {"strategy": "two_stage", "feedback_source": "decoder", "feedback_loops": 1,
                     "classifier_input": "orig"},
    "Alternating": {"strategy": "alternating", "feedback_source": "decoder", "feedback_loops": 1,
                    "classifier_input": "orig"},
}
CLASSIFIER_ABLATIONS = {
    "OrigFeat": {"feedback_loops": 0, "classifier_input": "orig"},
    "ConcatFeat": {"feedback_loops": 0, "classifier_input": "concat_attr"},
    "T-feature": {"feedback_loops": 0, "classifier_input": "concat_latent"},
}


@dataclass
class ExperimentResult:
    zsl: EvalReport
    gzsl: EvalReport
    state: TrainState | None = None
    scaler: FeatureScaler | None = None

    def summary(self) -> dict:
        return {
            "zsl_t1": self.zsl.zsl_t1,
            "u": self.gzsl.gzsl_u,
            "s": self.gzsl.gzsl_s,
            "H": self.gzsl.gzsl_h,
            "feature_width": self.zsl.feature_width,
        }

    def to_dict(self) -> dict:
        out = self.summary()
        out["zsl"] = self.zsl.to_dict()
        out["gzsl"] = self.gzsl.to_dict()
        return out


def prepare(dataset: ZSLDataset, scaling: str = "minmax") -> tuple[ZSLDataset, FeatureScaler | None]:
    if scaling == "none":
        return dataset, None
    if scaling != "minmax":
        raise ValueError(f"unknown scaling {scaling!r}")
    return scale_dataset(dataset)


def evaluate_model(model: TFVAEGAN, dataset: ZSLDataset, config: ModelConfig | None = None,
                   seed: int | None = None) -> tuple[EvalReport, EvalReport]:
    """Synthesize unseen features, fit the ZSL and GZSL classifiers and score the test splits."""
    config = config or model.config
    seed = config.seed if seed is None else seed
    decoder = model.decoder
    variant = config.classifier_input
    unseen = dataset.unseen_classes
    seen = dataset.seen_classes
    cls_kw = dict(lr=config.classifier_lr, epochs=config.cls_epochs, batch_size=config.cls_batch_size,
                  betas=(config.adam_beta1, config.adam_beta2), dtype=config.torch_dtype)

    syn = synthesize(model, dataset.attributes, unseen, config.syn_num, config, seed=seed)
    zsl_clf = train_softmax(transform(syn.features, decoder, variant), syn.labels, unseen, seed=seed, **cls_kw)
    zsl = evaluate_zsl(zsl_clf, decoder, dataset.features[dataset.test_unseen],
                       dataset.labels[dataset.test_unseen], unseen)

    x_parts = [np.asarray(dataset.features[dataset.train_seen]), syn.features]
    y_parts = [np.asarray(dataset.labels[dataset.train_seen]), syn.labels]
    if config.synthesize_seen:
        syn_seen = synthesize(model, dataset.attributes, seen, config.syn_num, config, seed=seed + 1)
        x_parts.append(syn_seen.features)
        y_parts.append(syn_seen.labels)
    x_all = np.concatenate(x_parts).astype(np.float32 if config.dtype == "float32" else np.float64)
    y_all = np.concatenate(y_parts)
    all_classes = np.union1d(seen, unseen)
    gzsl_clf = train_softmax(transform(x_all, decoder, variant), y_all, all_classes, seed=seed, **cls_kw)
    gzsl = evaluate_gzsl(gzsl_clf, decoder,
                         dataset.features[dataset.test_seen], dataset.labels[dataset.test_seen],
                         dataset.features[dataset.test_unseen], dataset.labels[dataset.test_unseen],
                         seen, unseen)
    return zsl, gzsl


def run_experiment(dataset: ZSLDataset, config: ModelConfig, scaling: str = "minmax",
                   checkpoint_path=None, callback=None) -> ExperimentResult:
    scaled, scaler = prepare(dataset, scaling)
    torch.manual_seed(config.seed)
    state, _ = train(scaled, config, checkpoint_path=checkpoint_path, callback=callback)
    zsl, gzsl = evaluate_model(state.model, scaled, config)
    return ExperimentResult(zsl=zsl, gzsl=gzsl, state=state, scaler=scaler)


def config_for(dataset: ZSLDataset, **overrides) -> ModelConfig:
    values = {"d_x": dataset.n_features, "d_a": dataset.n_attributes}
    values.update(overrides)
    values.pop("d_z", None)
    return ModelConfig(**values)


def with_overrides(config: ModelConfig, **overrides) -> ModelConfig:
    return dataclasses.replace(config, **overrides)


def run_ablation(datasets: Callable[[int], ZSLDataset], config: ModelConfig, variants: dict[str, dict],
                 seeds: Iterable[int] = (0,), scaling: str = "minmax") -> dict[str, list[dict]]:
    """Run every variant for every seed; ``datasets(seed)`` supplies the data for that seed.

    Returns the per-seed summaries keyed by variant name.
    """
    out: dict[str, list[dict]] = {name: [] for name in variants}
    for seed in seeds:
        dataset = datasets(seed)
        for name, overrides in variants.items():
            cfg = with_overrides(config, seed=seed, **overrides)
            out[name].append(run_experiment(dataset, cfg, scaling).summary())
    return out


def ablation_table(results: dict[str, list[dict]]) -> dict[str, dict[str, float]]:
    """Seed means of ZSL T1 and GZSL H for each variant."""
    return {name: {"ZSL": float(np.mean([r["zsl_t1"] for r in rows])),
                   "GZSL": float(np.mean([r["H"] for r in rows]))}
            for name, rows in results.items()}
