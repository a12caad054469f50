"""Action recognition: one-layer GRU plus a softmax MLP head, applied per frame.

The same classifier serves three roles: labeling past motion for transition
retrieval, providing the classification loss that drives both training and
the adaptive fusion signal, and (a separately trained copy) extracting
features for evaluation metrics.
"""

import warnings
from dataclasses import dataclass

import numpy as np

from .diffcore import (
    Tensor,
    concat,
    cross_entropy,
    gather_rows,
    no_grad,
    reshape,
    softmax,
)
from .errors import ValidationError
from .motiondata import MotionSequence, one_hot
from .nn import add_gru, add_mlp, gru_run, gru_step, mlp

HEAD_DEPTH = 2  # one tanh hidden layer, then linear to class logits


@dataclass
class ClassifierOutput:
    per_frame_probs: np.ndarray  # (L, C)
    final_probs: np.ndarray  # (C,)
    features: np.ndarray  # (H,) final hidden state, pre-head


def add_arm_params(store, rng, pose_dim, num_actions, hidden=64, head_hidden=64,
                   prefix="arm", trainable=True):
    """Register classifier parameters: all matrices uniform(-1/sqrt(H), 1/sqrt(H))."""
    bound = 1.0 / np.sqrt(hidden)
    add_gru(store, rng, prefix + ".gru", pose_dim, hidden, trainable, bound)
    add_mlp(store, rng, prefix + ".head",
            [hidden, head_hidden, num_actions], trainable, bound)


def arm_hidden_width(store, prefix="arm"):
    return store[prefix + ".gru.cand.b"].shape[0]


def arm_num_actions(store, prefix="arm"):
    return store[prefix + f".head.l{HEAD_DEPTH - 1}.b"].shape[0]


def arm_pose_dim(store, prefix="arm"):
    return store[prefix + ".gru.gates.W"].shape[0] - arm_hidden_width(store, prefix)


def _check_dim(store, prefix, dim):
    expected = arm_pose_dim(store, prefix)
    if dim != expected:
        raise ValidationError(
            f"classifier expects pose dimension {expected}, got {dim}"
        )


def arm_scan(store, frames, prefix="arm"):
    """Core recurrence on a batch. frames: list of L tensors (B, K).

    Returns (per-frame probability Tensor (L, B, C), final hidden Tensor (B, H)).
    Runs on the tape when gradients are enabled, so it serves training too.
    """
    batch = frames[0].shape[0]
    width = arm_hidden_width(store, prefix)
    hiddens = gru_run(store, prefix + ".gru", frames, Tensor(np.zeros((batch, width))))
    length = len(hiddens)
    stacked = concat([reshape(h, (1, batch, width)) for h in hiddens], axis=0)
    logits = mlp(store, prefix + ".head", reshape(stacked, (length * batch, width)),
                 HEAD_DEPTH)
    probs = reshape(softmax(logits), (length, batch, -1))
    return probs, hiddens[-1]


def _seq_frames(seq):
    if isinstance(seq, MotionSequence):
        return seq.frames
    arr = np.asarray(seq, dtype=np.float64)
    if arr.ndim != 2:
        raise ValidationError(f"sequence must be (frames, dim), got {arr.shape}")
    return arr


def arm_forward(store, seq, prefix="arm"):
    """Classify one sequence; plain-array output, no gradient tracking."""
    arr = _seq_frames(seq)
    _check_dim(store, prefix, arr.shape[1])
    with no_grad():
        frames = [Tensor(arr[t : t + 1]) for t in range(arr.shape[0])]
        probs, final_h = arm_scan(store, frames, prefix)
    per_frame = probs.data[:, 0, :]
    return ClassifierOutput(
        per_frame_probs=per_frame,
        final_probs=per_frame[-1].copy(),
        features=final_h.data[0].copy(),
    )


def arm_loss(store, seq, label, tau_cls=5, prefix="arm"):
    """Mean cross-entropy of per-frame predictions over frames t >= tau_cls."""
    arr = _seq_frames(seq)
    _check_dim(store, prefix, arr.shape[1])
    classes = arm_num_actions(store, prefix)
    if label.num_actions != classes:
        raise ValidationError(
            f"label has {label.num_actions} classes, classifier has {classes}"
        )
    length = arr.shape[0]
    if tau_cls >= length:
        warnings.warn(
            f"tau_cls={tau_cls} >= sequence length {length}; loss is 0 by convention"
        )
        return Tensor(0.0)
    frames = [Tensor(arr[t : t + 1]) for t in range(length)]
    return arm_loss_frames(store, frames, one_hot(label)[None, :], tau_cls, prefix)


def arm_loss_frames(store, frames, target_onehot, tau_cls=5, prefix="arm"):
    """Batched per-frame classification loss.

    frames: list of L (B, K) tensors (data or generated poses, on or off the
    tape); target_onehot: (B, C). Mean cross-entropy over frames t >= tau_cls.
    """
    length = len(frames)
    target_onehot = np.asarray(target_onehot, dtype=np.float64)
    batch, classes = target_onehot.shape
    if tau_cls >= length:
        warnings.warn(
            f"tau_cls={tau_cls} >= sequence length {length}; loss is 0 by convention"
        )
        return Tensor(0.0)
    probs, _ = arm_scan(store, frames, prefix)  # (L, B, C)
    flat = reshape(probs, (length * batch, classes))
    kept = gather_rows(flat, np.arange(tau_cls * batch, length * batch))
    target = np.tile(target_onehot, (length - tau_cls, 1))
    return cross_entropy(kept, target)


def arm_topk(final_probs, k):
    """Labels of the k largest probabilities (ties to the lower index) and
    those probabilities renormalized to sum to 1."""
    probs = np.asarray(final_probs, dtype=np.float64)
    classes = probs.shape[0]
    if not 1 <= k <= classes:
        raise ValidationError(f"k={k} outside [1, {classes}]")
    order = np.argsort(-probs, kind="stable")[:k]
    weights = probs[order]
    weights = weights / weights.sum()
    return order.tolist(), weights


class PrefixClassifier:
    """Incremental per-frame classification of a growing batch of prefixes.

    Feeding frames one at a time gives the same rows as rerunning the full
    prefix (the recurrence is causal); this avoids quadratic rescanning
    inside decode loops. Always runs without gradient tracking.
    """

    def __init__(self, store, batch, prefix="arm"):
        self.store = store
        self.prefix = prefix
        self.hidden = np.zeros((batch, arm_hidden_width(store, prefix)))

    def step(self, frames):
        """Append one frame per sequence. frames: (B, K) array -> (B, C) probs."""
        with no_grad():
            h = gru_step(self.store, self.prefix + ".gru", Tensor(frames),
                         Tensor(self.hidden))
            self.hidden = h.data
            logits = mlp(self.store, self.prefix + ".head", h, HEAD_DEPTH)
            return softmax(logits).data
