"""Two-stage training: the classifier first, then the prediction model with
the classifier frozen inside it.

Both stages run Adam with the same schedule shape: the learning rate holds
at its initial value for a configured number of epochs, then decays linearly
to lr_floor * lr by the final epoch. Every random draw comes from a
generator derived from (seed, purpose tag), so a (config, seed) pair fully
determines the result.
"""

import numpy as np

from ..arm import arm_loss_frames, arm_scan, arm_topk
from ..cvae import BatchData, mpm_total_loss
from ..diffcore import AdamState, Tensor, adam_step, backward, no_grad
from ..errors import MotionBankError, ValidationError
from .model import build_arm_store, build_mpm_store

ARM_BATCH_TAG = 12
MPM_BATCH_TAG = 22
MPM_EPS_TAG = 23


def lr_at(epoch, total_epochs, base, hold, floor):
    """Constant for `hold` epochs, then linear decay to floor*base at the end."""
    if epoch < hold or total_epochs - 1 <= hold:
        return base
    frac = (epoch - hold) / (total_epochs - 1 - hold)
    return base * (1.0 - (1.0 - floor) * frac)


def _check_dataset(cfg, dataset):
    if not dataset:
        raise ValidationError("training dataset is empty")
    for s in dataset:
        if s.past.dim != cfg.pose_dim:
            raise ValidationError(
                f"dataset pose dim {s.past.dim} != config pose_dim {cfg.pose_dim}"
            )
        if s.future_action.num_actions != cfg.num_actions:
            raise ValidationError(
                f"dataset has {s.future_action.num_actions} classes, "
                f"config num_actions is {cfg.num_actions}"
            )


def arm_training_segments(dataset):
    """Both halves of every sample, each under its own label."""
    segments = []
    for s in dataset:
        segments.append((s.past.frames, s.past_action.index))
        segments.append((s.future.frames, s.future_action.index))
    return segments


def _length_bucketed_batches(lengths, batch_size, rng):
    """Index batches grouped by sequence length, shuffled per epoch."""
    by_len = {}
    for i, n in enumerate(lengths):
        by_len.setdefault(n, []).append(i)
    batches = []
    for n in sorted(by_len):
        idx = np.array(by_len[n])
        rng.shuffle(idx)
        for start in range(0, len(idx), batch_size):
            batches.append(idx[start : start + batch_size])
    order = rng.permutation(len(batches))
    return [batches[i] for i in order]


def _onehot_rows(labels, classes):
    rows = np.zeros((len(labels), classes))
    rows[np.arange(len(labels)), labels] = 1.0
    return rows


def train_arm(cfg, dataset, seed=None, on_epoch=None):
    """Train the classifier; returns (store, adam, history of epoch losses)."""
    _check_dataset(cfg, dataset)
    seed = cfg.seed if seed is None else seed
    store = build_arm_store(cfg, seed)
    adam = AdamState(store, cfg.lr)
    rng = np.random.default_rng([seed, ARM_BATCH_TAG])
    segments = arm_training_segments(dataset)
    lengths = [f.shape[0] for f, _ in segments]
    history = []
    for epoch in range(cfg.epochs_arm):
        adam.lr = lr_at(epoch, cfg.epochs_arm, cfg.lr, cfg.lr_hold_arm, cfg.lr_floor)
        total, count = 0.0, 0
        for batch_idx in _length_bucketed_batches(lengths, cfg.batch_size, rng):
            frames_arr = np.stack([segments[i][0] for i in batch_idx], axis=1)
            labels = np.array([segments[i][1] for i in batch_idx])
            frames = [Tensor(frames_arr[t]) for t in range(frames_arr.shape[0])]
            loss = arm_loss_frames(store, frames, _onehot_rows(labels, cfg.num_actions),
                                   cfg.tau_cls)
            grads = backward(loss, store)
            adam_step(store, grads, adam)
            total += float(loss.data) * len(batch_idx)
            count += len(batch_idx)
        history.append(total / count)
        if on_epoch is not None:
            on_epoch(epoch, store, adam, rng)
    return store, adam, history


def prepare_batch(store, cfg, samples):
    """Constant inputs for one prediction-model step. Past-action guesses
    come from the frozen classifier on the past frames (never the labels)."""
    past = np.stack([s.past.frames for s in samples], axis=1)
    future = np.stack([s.future.frames for s in samples], axis=1)
    future_actions = np.array([s.future_action.index for s in samples])
    with no_grad():
        frames = [Tensor(past[t]) for t in range(past.shape[0])]
        probs, _ = arm_scan(store, frames)
    final = probs.data[-1]  # (B, C)
    labels = np.empty((len(samples), cfg.top_k), dtype=np.intp)
    weights = np.empty((len(samples), cfg.top_k))
    for b in range(len(samples)):
        lab, w = arm_topk(final[b], cfg.top_k)
        labels[b] = lab
        weights[b] = w
    return BatchData(
        past=past,
        future=future,
        future_onehot=_onehot_rows(future_actions, cfg.num_actions),
        future_actions=future_actions,
        topk_labels=labels,
        topk_weights=weights,
    )


def train_mpm(cfg, dataset, arm_params, seed=None, on_epoch=None):
    """Train the prediction model around a frozen classifier.

    arm_params: name -> array from a trained classifier checkpoint.
    Returns (store, adam, history of epoch loss dicts).
    """
    _check_dataset(cfg, dataset)
    seed = cfg.seed if seed is None else seed
    store = build_mpm_store(cfg, arm_params, seed)
    frozen_before = {n: t.data.copy() for n, t in store.items()
                     if n.startswith("arm.")}
    adam = AdamState(store, cfg.lr)
    rng = np.random.default_rng([seed, MPM_BATCH_TAG])
    rng_eps = np.random.default_rng([seed, MPM_EPS_TAG])
    history = []
    for epoch in range(cfg.epochs_mpm):
        adam.lr = lr_at(epoch, cfg.epochs_mpm, cfg.lr, cfg.lr_hold_mpm, cfg.lr_floor)
        order = rng.permutation(len(dataset))
        sums = np.zeros(4)
        count = 0
        for start in range(0, len(order), cfg.batch_size):
            batch = [dataset[i] for i in order[start : start + cfg.batch_size]]
            bd = prepare_batch(store, cfg, batch)
            eps = rng_eps.standard_normal((len(batch), cfg.latent_dim))
            loss = mpm_total_loss(store, cfg, bd, eps)
            grads = backward(loss.total, store)
            adam_step(store, grads, adam)
            sums += np.array([float(loss.total.data), loss.rec, loss.kl, loss.ce]) * len(batch)
            count += len(batch)
        history.append(dict(zip(("total", "rec", "kl", "ce"), sums / count)))
        if on_epoch is not None:
            on_epoch(epoch, store, adam, rng)
    for name, before in frozen_before.items():
        if not np.array_equal(store[name].data, before):
            raise MotionBankError(
                f"freeze contract violated: {name} changed during training"
            )
    return store, adam, history
