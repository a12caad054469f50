"""Run configuration: every hyperparameter with its default, JSON load,
validation, and a stable content hash for reports."""

import hashlib
import json
from dataclasses import asdict, dataclass, field, fields

from ..errors import ValidationError


@dataclass
class Config:
    # data and model dimensions
    pose_dim: int = 16
    num_actions: int = 4
    past_len: int = 10
    horizon: int = 25
    latent_dim: int = 16
    hidden_dim: int = 64
    # bank geometry
    stab_tuples: int = 8
    acb_tuples: int = 8
    key_dim: int = 32
    value_dim: int = 32
    fused_dim: int = 32
    bank_mlp_hidden: list = field(default_factory=lambda: [32])
    top_k: int = 2
    # adaptive fusion
    gamma: float = 0.9
    tau_aaa: int = 5
    # losses
    tau_cls: int = 5
    lambda_kl: float = 0.1
    lambda_ce: float = 1.0
    # training schedule
    lr: float = 0.002
    epochs_arm: int = 150
    epochs_mpm: int = 150
    lr_hold_arm: int = 50
    lr_hold_mpm: int = 100
    lr_floor: float = 0.1
    batch_size: int = 32
    checkpoint_every: int = 0
    seed: int = 0
    # sampling
    num_samples: int = 50
    # ablations
    disable_stab: bool = False
    disable_acb: bool = False
    disable_aaa: bool = False
    disable_running_mean: bool = False
    aaa_conventional_ema: bool = False


_POSITIVE_INT = (
    "pose_dim", "num_actions", "past_len", "horizon", "latent_dim", "hidden_dim",
    "stab_tuples", "acb_tuples", "key_dim", "value_dim", "fused_dim",
    "batch_size", "num_samples",
)
_NONNEG_INT = (
    "tau_aaa", "tau_cls", "epochs_arm", "epochs_mpm", "lr_hold_arm",
    "lr_hold_mpm", "checkpoint_every",
)
_NONNEG_FLOAT = ("lambda_kl", "lambda_ce", "lr")
_BOOL = (
    "disable_stab", "disable_acb", "disable_aaa", "disable_running_mean",
    "aaa_conventional_ema",
)


def validate_config(cfg):
    for name in _POSITIVE_INT:
        v = getattr(cfg, name)
        if not isinstance(v, int) or isinstance(v, bool) or v < 1:
            raise ValidationError(f"config {name} must be a positive integer, got {v!r}")
    for name in _NONNEG_INT:
        v = getattr(cfg, name)
        if not isinstance(v, int) or isinstance(v, bool) or v < 0:
            raise ValidationError(f"config {name} must be a nonnegative integer, got {v!r}")
    for name in _NONNEG_FLOAT:
        v = getattr(cfg, name)
        if not isinstance(v, (int, float)) or isinstance(v, bool) or v < 0:
            raise ValidationError(f"config {name} must be >= 0, got {v!r}")
    for name in _BOOL:
        if not isinstance(getattr(cfg, name), bool):
            raise ValidationError(f"config {name} must be true or false")
    if not isinstance(cfg.seed, int) or isinstance(cfg.seed, bool) or cfg.seed < 0:
        raise ValidationError(f"config seed must be a nonnegative integer, got {cfg.seed!r}")
    if not 0.0 <= cfg.gamma <= 1.0:
        raise ValidationError(f"config gamma must be in [0, 1], got {cfg.gamma!r}")
    if not 0.0 < cfg.lr_floor <= 1.0:
        raise ValidationError(f"config lr_floor must be in (0, 1], got {cfg.lr_floor!r}")
    if not 1 <= cfg.top_k <= cfg.num_actions:
        raise ValidationError(
            f"config top_k must be in [1, num_actions={cfg.num_actions}], got {cfg.top_k}"
        )
    if not isinstance(cfg.bank_mlp_hidden, list) or any(
        not isinstance(w, int) or isinstance(w, bool) or w < 1
        for w in cfg.bank_mlp_hidden
    ):
        raise ValidationError(
            f"config bank_mlp_hidden must be a list of positive integers, "
            f"got {cfg.bank_mlp_hidden!r}"
        )
    return cfg


_FIELD_NAMES = {f.name for f in fields(Config)}
_FLOAT_FIELDS = {"gamma", "lambda_kl", "lambda_ce", "lr", "lr_floor"}


def config_from_dict(d):
    if not isinstance(d, dict):
        raise ValidationError(f"config must be a JSON object, got {type(d).__name__}")
    unknown = set(d) - _FIELD_NAMES
    if unknown:
        raise ValidationError(f"unknown config keys: {sorted(unknown)}")
    coerced = dict(d)
    for name in _FLOAT_FIELDS & set(coerced):
        v = coerced[name]
        if isinstance(v, int) and not isinstance(v, bool):
            coerced[name] = float(v)
    return validate_config(Config(**coerced))


def load_config(path):
    try:
        with open(path) as fh:
            doc = json.load(fh)
    except json.JSONDecodeError as e:
        raise ValidationError(f"config file {path}: invalid JSON: {e}") from e
    return config_from_dict(doc)


def config_to_dict(cfg):
    return asdict(cfg)


def config_hash(cfg):
    """Stable hex digest of the full configuration."""
    blob = json.dumps(config_to_dict(cfg), sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(blob.encode()).hexdigest()
