"""Model assembly: parameter construction for both training stages, shape
inventories, and checkpoint round-trips.

The prediction model embeds the frozen classifier's parameters under the
"arm." prefix with trainable=False, so one store serves the whole forward
pass and the optimizer only ever sees the trainable names. Disabled
submodules (ablations) never register parameters at all.
"""

import numpy as np

from ..arm import add_arm_params, arm_num_actions, arm_pose_dim
from ..banks import add_acb_params, add_query_params, add_stab_params
from ..cvae import add_decoder_params, add_posterior_params, add_prior_params
from ..diffcore import ParamStore
from ..errors import CheckpointError, ValidationError
from .checkpoint import load_checkpoint

ARM_INIT_TAG = 11
MPM_INIT_TAG = 21


def build_arm_store(cfg, seed=None):
    store = ParamStore()
    rng = np.random.default_rng([seed if seed is not None else cfg.seed, ARM_INIT_TAG])
    add_arm_params(store, rng, cfg.pose_dim, cfg.num_actions,
                   hidden=cfg.hidden_dim, head_hidden=cfg.hidden_dim)
    return store


def build_mpm_store(cfg, arm_params, seed=None):
    """arm_params: name -> array of a trained classifier (frozen here)."""
    store = ParamStore()
    for name in sorted(arm_params):
        if not name.startswith("arm."):
            raise ValidationError(f"unexpected classifier parameter {name!r}")
        store.add(name, arm_params[name], trainable=False)
    _check_arm_dims(store, cfg)
    rng = np.random.default_rng([seed if seed is not None else cfg.seed, MPM_INIT_TAG])
    add_posterior_params(store, rng, cfg.pose_dim, cfg.num_actions,
                         cfg.hidden_dim, cfg.latent_dim)
    add_prior_params(store, rng, cfg.pose_dim, cfg.num_actions,
                     cfg.hidden_dim, cfg.latent_dim)
    add_decoder_params(store, rng, cfg.pose_dim, cfg.hidden_dim,
                       cfg.latent_dim, cfg.fused_dim)
    if not (cfg.disable_stab and cfg.disable_acb):
        add_query_params(store, rng, cfg.hidden_dim, cfg.num_actions, cfg.key_dim)
    if not cfg.disable_stab:
        add_stab_params(store, rng, cfg.num_actions, cfg.stab_tuples,
                        cfg.key_dim, cfg.value_dim, cfg.fused_dim,
                        cfg.bank_mlp_hidden)
    if not cfg.disable_acb:
        add_acb_params(store, rng, cfg.num_actions, cfg.acb_tuples,
                       cfg.key_dim, cfg.value_dim, cfg.fused_dim,
                       cfg.bank_mlp_hidden)
    return store


def _check_arm_dims(store, cfg):
    k = arm_pose_dim(store)
    c = arm_num_actions(store)
    if k != cfg.pose_dim or c != cfg.num_actions:
        raise ValidationError(
            f"classifier was trained for pose_dim={k}, num_actions={c}; "
            f"config expects pose_dim={cfg.pose_dim}, num_actions={cfg.num_actions}"
        )


def _shapes_of(store):
    return {name: tensor.data.shape for name, tensor in store.items()}


def arm_param_shapes(cfg):
    return _shapes_of(build_arm_store(cfg, seed=0))


def mpm_param_shapes(cfg):
    dummy_arm = {n: np.zeros(s) for n, s in arm_param_shapes(cfg).items()}
    return _shapes_of(build_mpm_store(cfg, dummy_arm, seed=0))


def store_from_checkpoint(ckpt):
    """Rebuild a ParamStore, validating names and shapes against the
    inventory implied by the checkpoint's own config."""
    expected = (
        arm_param_shapes(ckpt.config)
        if ckpt.kind == "arm"
        else mpm_param_shapes(ckpt.config)
    )
    missing = set(expected) - set(ckpt.params)
    extra = set(ckpt.params) - set(expected)
    if missing:
        raise CheckpointError(f"checkpoint missing parameters: {sorted(missing)}")
    if extra:
        raise CheckpointError(f"checkpoint has unexpected parameters: {sorted(extra)}")
    store = ParamStore()
    for name in sorted(ckpt.params):
        arr = ckpt.params[name]
        if arr.shape != expected[name]:
            raise CheckpointError(
                f"checkpoint param {name}: shape {arr.shape} does not match "
                f"config-implied {expected[name]}"
            )
        store.add(name, arr, trainable=ckpt.trainable[name])
    return store


def load_model(path, expect_kind=None):
    """Checkpoint file -> (Checkpoint, ParamStore)."""
    ckpt = load_checkpoint(path)
    if expect_kind is not None and ckpt.kind != expect_kind:
        raise CheckpointError(
            f"checkpoint {path} is kind {ckpt.kind!r}, expected {expect_kind!r}"
        )
    return ckpt, store_from_checkpoint(ckpt)


def arm_params_of(store):
    """Extract classifier arrays (copies) from any store holding them."""
    return {
        name: tensor.data.copy()
        for name, tensor in store.items()
        if name.startswith("arm.")
    }
