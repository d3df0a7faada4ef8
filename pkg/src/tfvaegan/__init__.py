"""Feature-generating zero-shot learning with semantic feedback and feature transformation."""

from .classify import (
    EvalReport,
    SoftmaxClassifier,
    TransformedFeatures,
    evaluate_gzsl,
    evaluate_zsl,
    harmonic_mean,
    per_class_accuracy,
    train_softmax,
    transform,
)
from .data import (
    FeatureScaler,
    SyntheticOracle,
    ZSLDataset,
    apply_scaler,
    fit_scaler,
    load_benchmark_bundle,
    load_native_bundle,
    make_dataset,
    make_synthetic,
    save_native_bundle,
    scale_dataset,
)
from .errors import (
    CompatibilityError,
    DomainError,
    FormatError,
    GradientUnavailableError,
    NumericError,
    ShapeError,
    StateError,
    TFVAEGANError,
    TrainingAborted,
    ValidationError,
)
from .losses import (
    critic_loss,
    cycle_loss,
    generator_adv_loss,
    gradient_penalty,
    kl_term,
    reconstruction_term,
    total_vae_gan,
    total_with_cycle,
)
from .networks import TFVAEGAN, ModelConfig, load_checkpoint, reparameterize, save_checkpoint
from .pipeline import ExperimentResult, run_ablation, run_experiment
from .synthesis import SynthesizedSet, synthesize
from .training import TrainState, critic_step, feedback_step, generator_step, init_state, train

__version__ = "0.1.0"
