"""Training, inference, and persistence for the full model."""

from .checkpoint import (
    Checkpoint,
    load_checkpoint,
    rng_state_of,
    save_checkpoint,
)
from .config import Config, config_from_dict, config_hash, config_to_dict, load_config
from .infer import evaluate, predict
from .model import (
    arm_param_shapes,
    arm_params_of,
    build_arm_store,
    build_mpm_store,
    load_model,
    mpm_param_shapes,
    store_from_checkpoint,
)
from .train import lr_at, prepare_batch, train_arm, train_mpm

__all__ = [
    "Checkpoint",
    "Config",
    "arm_param_shapes",
    "arm_params_of",
    "build_arm_store",
    "build_mpm_store",
    "config_from_dict",
    "config_hash",
    "config_to_dict",
    "evaluate",
    "load_checkpoint",
    "load_config",
    "load_model",
    "lr_at",
    "mpm_param_shapes",
    "predict",
    "prepare_batch",
    "rng_state_of",
    "save_checkpoint",
    "store_from_checkpoint",
    "train_arm",
    "train_mpm",
]
