"""Losses, regularizers, optimizer, augmentation, checkpoints and the training loop."""
from .augment import AugmentDraw, AugmentPolicy, apply_augment, diffaugment, sample_augment
from .checkpoint import CheckpointError, decode_checkpoint, encode_checkpoint, load_checkpoint, save_checkpoint
from .losses import bcr_penalty, d_loss, g_loss, input_gradient, r1_penalty
from .loop import (CSV_FIELDS, MetricsWriter, StepMetrics, TrainConfig, Trainer, TrainingError, grad_norm,
                   read_metrics, train_step)
from .optim import Adam, AdamState, adam_step
