"""Velocity-field inference from unpaired snapshot samples.

The pipeline: generate or load a snapshot dataset, normalize it, sample a
random Fourier test bank, precompute moment targets, train a velocity
network against the weak-form transport residual, then integrate the
learned field to generate samples and score them.
"""

from .dataset import (
    DataFormatError,
    DomainDescriptor,
    NormalizationStats,
    SnapshotDataset,
    load_dataset,
    normalize_dataset,
    save_dataset,
)
from .metrics import energy_rel_error, field_rel_l2, tv_curve, tv_distance
from .moments import MomentTable, precompute_moment_table
from .network import MlpArchitecture
from .objective import ObjectiveConfig, total_loss, total_loss_and_grad
from .simulate import integrate_ode, integrate_sde
from .testbank import TestBank, median_heuristic_bandwidth, sample_bank
from .trainer import (
    Checkpoint,
    TrainConfig,
    TrainingDivergedError,
    load_checkpoint,
    save_checkpoint,
    train,
)
from .velocity_model import AnalyticField, VelocityField, wrap_normalized, wrap_raw

__version__ = "0.1.0"

__all__ = [
    "AnalyticField",
    "Checkpoint",
    "DataFormatError",
    "DomainDescriptor",
    "MlpArchitecture",
    "MomentTable",
    "NormalizationStats",
    "ObjectiveConfig",
    "SnapshotDataset",
    "TestBank",
    "TrainConfig",
    "TrainingDivergedError",
    "VelocityField",
    "energy_rel_error",
    "field_rel_l2",
    "integrate_ode",
    "integrate_sde",
    "load_checkpoint",
    "load_dataset",
    "median_heuristic_bandwidth",
    "normalize_dataset",
    "precompute_moment_table",
    "sample_bank",
    "save_checkpoint",
    "save_dataset",
    "total_loss",
    "total_loss_and_grad",
    "train",
    "tv_curve",
    "tv_distance",
    "wrap_normalized",
    "wrap_raw",
]
