"""Inference and evaluation.

predict() draws z from the prior only: the function signature has no future
argument anywhere. All stochastic draws derive from the given seed, so a
(checkpoint, inputs, seed) triple is fully reproducible.
"""

import numpy as np

from ..arm import arm_forward, arm_topk
from ..cvae import decode, encode_prior_with_context, make_fusion
from ..diffcore import Tensor, gather_rows, no_grad
from ..errors import ValidationError
from ..metrics import (
    compute_stats,
    diversity,
    diversity_warped,
    extract_features_batch,
    fid,
)
from ..motiondata import MotionSequence
from .config import config_hash

PREDICT_EPS_TAG = 31
EVAL_EPS_TAG = 32


def predict(store, cfg, past, future_action, horizon=None, num_samples=None,
            seed=0, trace_alpha=False):
    """Generate futures for one condition.

    past: MotionSequence / (N, K) array; future_action: ActionLabel or int.
    Returns (list of num_samples MotionSequences of `horizon` frames,
    alpha trace as a (num_samples, steps) array or None).
    """
    horizon = cfg.horizon if horizon is None else horizon
    if horizon < 1:
        raise ValidationError(f"horizon must be >= 1, got {horizon}")
    count = cfg.num_samples if num_samples is None else num_samples
    if count < 1:
        raise ValidationError(f"num_samples must be >= 1, got {count}")
    action = (
        future_action.index if hasattr(future_action, "index") else int(future_action)
    )
    if not 0 <= action < cfg.num_actions:
        raise ValidationError(
            f"future action {action} outside [0, {cfg.num_actions})"
        )
    past_arr = past.frames if hasattr(past, "frames") else np.asarray(past, float)
    with no_grad():
        classified = arm_forward(store, past_arr)
        topk_labels, topk_weights = arm_topk(classified.final_probs, cfg.top_k)
        prior, past_code = encode_prior_with_context(
            store, past_arr[:, None, :], _onehot(action, cfg.num_actions)
        )
        wide = np.zeros(count, dtype=np.intp)
        past_code_g = gather_rows(past_code, wide)
        eps = np.random.default_rng([seed, PREDICT_EPS_TAG]).standard_normal(
            (count, cfg.latent_dim)
        )
        z = Tensor(prior.mu.data[0] + prior.sigma.data[0] * eps)
        labels_g = np.tile(np.asarray(topk_labels, dtype=np.intp), (count, 1))
        weights_g = np.tile(topk_weights, (count, 1))
        actions_g = np.full(count, action, dtype=np.intp)
        fusion, on_frame, trace = make_fusion(
            store, cfg, past_code_g, labels_g, weights_g, actions_g, count
        )
        frames = decode(store, z, past_code_g, horizon, fusion, on_frame)
    stacked = np.stack([f.data for f in frames])  # (T, G, K)
    sequences = [MotionSequence(stacked[:, g, :]) for g in range(count)]
    alpha = None
    if trace_alpha and trace:
        alpha = np.stack(trace, axis=1)  # (G, steps)
    return sequences, alpha


def _onehot(action, classes):
    row = np.zeros((1, classes))
    row[0, action] = 1.0
    return row


def evaluate(store, cfg, eval_store, train_set, test_set, seed=0, generator=None):
    """Metric report over the test conditions.

    eval_store: the held-out classifier (feature extractor and judge).
    generator(index, sample) -> (G, T, K) array; defaults to predict() with a
    per-condition derived seed. Returns a JSON-ready dict.
    """
    if not test_set:
        raise ValidationError("evaluation needs a nonempty test set")
    if not train_set:
        raise ValidationError("evaluation needs a nonempty train set")
    if cfg.num_samples < 2:
        raise ValidationError("evaluation needs num_samples >= 2 for diversity")

    def default_generator(index, sample):
        seqs, _ = predict(
            store, cfg, sample.past, sample.future_action,
            seed=_condition_seed(seed, index),
        )
        return np.stack([s.frames for s in seqs])

    gen = generator if generator is not None else default_generator
    train_futures = np.stack([s.future.frames for s in train_set])
    test_futures = np.stack([s.future.frames for s in test_set])
    stats_train = compute_stats(extract_features_batch(eval_store, train_futures)[0])
    stats_test = compute_stats(extract_features_batch(eval_store, test_futures)[0])

    feature_blocks = []
    hits_total = 0
    count_total = 0
    div_values = []
    divw_values = []
    per_action = {}
    for i, sample in enumerate(test_set):
        block = np.asarray(gen(i, sample))
        if block.ndim != 3:
            raise ValidationError(
                f"generator must return (G, T, K), got {block.shape}"
            )
        feats, final_probs = extract_features_batch(eval_store, block)
        feature_blocks.append(feats)
        target = sample.future_action.index
        hits = int((np.argmax(final_probs, axis=1) == target).sum())
        hits_total += hits
        count_total += block.shape[0]
        div_i = diversity(list(block), cfg.horizon)
        divw_i = diversity_warped(list(block))
        div_values.append(div_i)
        divw_values.append(divw_i)
        slot = per_action.setdefault(
            target, {"hits": 0, "count": 0, "div": [], "div_w": []}
        )
        slot["hits"] += hits
        slot["count"] += block.shape[0]
        slot["div"].append(div_i)
        slot["div_w"].append(divw_i)

    stats_gen = compute_stats(np.concatenate(feature_blocks))
    report = {
        "acc": hits_total / count_total,
        "fid_train": fid(stats_gen, stats_train),
        "fid_test": fid(stats_gen, stats_test),
        "div": float(np.mean(div_values)),
        "div_w": float(np.mean(divw_values)),
        "per_action": {
            str(a): {
                "acc": slot["hits"] / slot["count"],
                "div": float(np.mean(slot["div"])),
                "div_w": float(np.mean(slot["div_w"])),
                "conditions": len(slot["div"]),
            }
            for a, slot in sorted(per_action.items())
        },
        "num_conditions": len(test_set),
        "samples_per_condition": cfg.num_samples,
        "config_hash": config_hash(cfg),
        "seed": seed,
    }
    return report


def _condition_seed(seed, index):
    return int(np.random.default_rng([seed, EVAL_EPS_TAG, index]).integers(2**31))
