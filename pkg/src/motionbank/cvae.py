"""CVAE backbone: posterior and prior encoders, autoregressive decoder, losses.

The posterior encodes past+future frames (with the action one-hot appended
per frame) into a diagonal Gaussian; the prior sees only the past. The
decoder is a GRU cell fed [z, past summary, fused bank feature] at every
step; the per-step fused feature comes from a callback so the same decode
loop serves training, inference, and every ablation. At inference z comes
from the prior alone: none of the inference entry points accept a future.

The decoder is fully autoregressive (no teacher forcing): the adaptive
fusion signal scores the actually generated prefix, so the generated frames
must be the ones the classifier sees.
"""

from dataclasses import dataclass

import numpy as np

from .aaa import fuse, new_alpha_state, update_alpha
from .arm import PrefixClassifier, arm_loss_frames
from .banks import acb_retrieve, build_query, stab_retrieve_soft
from .diffcore import (
    Tensor,
    add,
    concat,
    div,
    exp,
    log,
    mul,
    scale,
    slice_cols,
    sub,
    tmean,
    tsum,
)
from .errors import ValidationError
from .nn import add_gru, add_mlp, gru_run, gru_step, mlp

HEAD_DEPTH = 2


@dataclass
class GaussianParams:
    """Diagonal Gaussian: mu and sigma are (B, D) tensors, sigma > 0."""

    mu: Tensor
    sigma: Tensor


@dataclass
class MpmLoss:
    total: Tensor
    rec: float
    kl: float
    ce: float
    alpha_trace: list  # one (B,) array per decode step


def add_posterior_params(store, rng, pose_dim, classes, hidden, latent,
                         prefix="post"):
    add_gru(store, rng, prefix + ".gru", pose_dim + classes, hidden)
    add_mlp(store, rng, prefix + ".head", [hidden, hidden, 2 * latent])


def add_prior_params(store, rng, pose_dim, classes, hidden, latent,
                     prefix="prior"):
    add_gru(store, rng, prefix + ".gru", pose_dim + classes, hidden)
    add_mlp(store, rng, prefix + ".head", [hidden, hidden, 2 * latent])


def add_decoder_params(store, rng, pose_dim, hidden, latent, fused_dim,
                       prefix="dec"):
    add_gru(store, rng, prefix + ".gru", latent + hidden + fused_dim, hidden)
    add_mlp(store, rng, prefix + ".head", [hidden, hidden, pose_dim])


def _as_lbk(frames):
    """Normalize a sequence to (length, batch, dim)."""
    arr = frames.frames[:, None, :] if hasattr(frames, "frames") else None
    if arr is None:
        arr = np.asarray(frames, dtype=np.float64)
        if arr.ndim == 2:
            arr = arr[:, None, :]
        elif arr.ndim != 3:
            raise ValidationError(
                f"expected (frames, dim) or (frames, batch, dim), got {arr.shape}"
            )
    if arr.shape[0] < 1:
        raise ValidationError("empty sequence")
    return arr


def _as_onehot(action, batch):
    """Normalize the action argument to a constant (batch, C) array."""
    if hasattr(action, "num_actions"):  # ActionLabel
        row = np.zeros(action.num_actions)
        row[action.index] = 1.0
        return np.tile(row, (batch, 1))
    arr = np.asarray(action, dtype=np.float64)
    if arr.ndim == 1:
        arr = np.tile(arr, (batch, 1))
    if arr.shape[0] != batch:
        raise ValidationError(
            f"action one-hot batch {arr.shape[0]} does not match frames batch {batch}"
        )
    return arr


def _encode(store, frames_lbk, onehot, prefix):
    """Shared GRU+head Gaussian encoder. Returns (params, final hidden)."""
    length, batch, _ = frames_lbk.shape
    per_step = [
        Tensor(np.concatenate([frames_lbk[t], onehot], axis=1))
        for t in range(length)
    ]
    hidden = store[prefix + ".gru.cand.b"].shape[0]
    hs = gru_run(store, prefix + ".gru", per_step, Tensor(np.zeros((batch, hidden))))
    out = mlp(store, prefix + ".head", hs[-1], HEAD_DEPTH)
    latent = out.shape[-1] // 2
    mu = slice_cols(out, 0, latent)
    sigma = exp(scale(slice_cols(out, latent, 2 * latent), 0.5))
    return GaussianParams(mu=mu, sigma=sigma), hs[-1]


def encode_posterior(store, future, past, action, prefix="post"):
    """q(z | future, past, action): consumes past then future frames."""
    past_arr = _as_lbk(past)
    future_arr = _as_lbk(future)
    if past_arr.shape[1:] != future_arr.shape[1:]:
        raise ValidationError(
            f"past {past_arr.shape} and future {future_arr.shape} disagree "
            f"on batch or pose dimension"
        )
    onehot = _as_onehot(action, past_arr.shape[1])
    params, _ = _encode(store, np.concatenate([past_arr, future_arr]), onehot, prefix)
    return params


def encode_prior(store, past, action, prefix="prior"):
    """p(z | past, action)."""
    params, _ = encode_prior_with_context(store, past, action, prefix)
    return params


def encode_prior_with_context(store, past, action, prefix="prior"):
    """Prior parameters plus the past summary (the prior GRU's final hidden),
    which doubles as the decoder's per-step context."""
    past_arr = _as_lbk(past)
    onehot = _as_onehot(action, past_arr.shape[1])
    return _encode(store, past_arr, onehot, prefix)


def reparameterize(params, eps):
    """z = eps * sigma + mu, with eps supplied by the caller."""
    eps_arr = np.asarray(eps, dtype=np.float64)
    if eps_arr.shape != params.mu.data.shape:
        raise ValidationError(
            f"eps shape {eps_arr.shape} does not match mu {params.mu.data.shape}"
        )
    return add(mul(Tensor(eps_arr), params.sigma), params.mu)


def kl_divergence(post, prior):
    """KL(post || prior) for diagonal Gaussians, averaged over the batch:

    0.5 * sum_i [ log(sigma_hat_i^2 / sigma_i^2)
                  + (sigma_i^2 + (mu_i - mu_hat_i)^2) / sigma_hat_i^2 - 1 ]
    """
    if post.mu.data.shape != prior.mu.data.shape:
        raise ValidationError(
            f"posterior D {post.mu.data.shape} != prior D {prior.mu.data.shape}"
        )
    var = mul(post.sigma, post.sigma)
    var_hat = mul(prior.sigma, prior.sigma)
    log_ratio = sub(log(var_hat), log(var))
    dmu = sub(post.mu, prior.mu)
    quad = div(add(var, mul(dmu, dmu)), var_hat)
    elt = sub(add(log_ratio, quad), np.ones_like(post.mu.data))
    per = scale(tsum(elt, axis=-1), 0.5)
    return tmean(per) if per.ndim > 0 else per


def decode(store, z, past_code, horizon, fusion, on_frame=None, prefix="dec"):
    """Autoregressive rollout. Returns a list of `horizon` pose tensors (B, K).

    fusion(t, decoder_state) supplies the per-step bank feature; action
    conditioning reaches the decoder through that feature and through z.
    on_frame(t, pose) fires after each emission (prefix classification hook).
    """
    if horizon < 1:
        raise ValidationError(f"horizon must be >= 1, got {horizon}")
    batch = z.shape[0]
    hidden = store[prefix + ".gru.cand.b"].shape[0]
    h = Tensor(np.zeros((batch, hidden)))
    frames = []
    for t in range(horizon):
        f_t = fusion(t, h)
        x = concat([z, past_code, f_t], axis=-1)
        h = gru_step(store, prefix + ".gru", x, h)
        y = mlp(store, prefix + ".head", h, HEAD_DEPTH)
        frames.append(y)
        if on_frame is not None:
            on_frame(t, y)
    return frames


def reconstruction_loss(pred, target):
    """Mean over frames of the squared Euclidean frame difference; (T, K) in."""
    pred_arr = pred if isinstance(pred, Tensor) else Tensor(np.asarray(pred, float))
    if hasattr(target, "frames"):
        target = target.frames
    elif isinstance(target, Tensor):
        target = target.data
    target_arr = np.asarray(target, dtype=np.float64)
    if pred_arr.data.shape != target_arr.shape:
        raise ValidationError(
            f"reconstruction shapes differ: {pred_arr.data.shape} vs {target_arr.shape}"
        )
    d = sub(pred_arr, Tensor(target_arr))
    return scale(tsum(mul(d, d)), 1.0 / target_arr.shape[0])


def reconstruction_loss_batch(pred_frames, target_tbk):
    """Batch mean of the per-sample loss. pred_frames: list of T (B, K)
    tensors; target_tbk: (T, B, K) array."""
    t_len = len(pred_frames)
    batch = pred_frames[0].shape[0]
    if target_tbk.shape != (t_len, batch, pred_frames[0].shape[1]):
        raise ValidationError(
            f"target shape {target_tbk.shape} does not match predictions "
            f"({t_len}, {batch}, {pred_frames[0].shape[1]})"
        )
    total = None
    for t, y in enumerate(pred_frames):
        d = sub(y, Tensor(target_tbk[t]))
        sq = tsum(mul(d, d))
        total = sq if total is None else add(total, sq)
    return scale(total, 1.0 / (t_len * batch))


@dataclass
class BatchData:
    """Constant inputs for one training step, prepared outside the tape."""

    past: np.ndarray  # (N, B, K)
    future: np.ndarray  # (T, B, K)
    future_onehot: np.ndarray  # (B, C)
    future_actions: np.ndarray  # (B,) ints
    topk_labels: np.ndarray  # (B, k) ints, from the frozen classifier on past
    topk_weights: np.ndarray  # (B, k), rows sum to 1


def make_fusion(store, cfg, past_code, topk_labels, topk_weights, future_actions,
                batch, pinned_alpha=None):
    """Assemble the per-step fusion callback for one decode.

    Returns (fusion, on_frame, alpha_trace). alpha_trace receives the alpha
    actually used at each step, one (batch,) array per step. pinned_alpha
    replays a recorded trace instead of tracking the classifier (used by
    finite-difference checks: alpha is a non-differentiated control signal,
    so the compared function must hold it fixed).
    """
    use_stab = not cfg.disable_stab
    use_acb = not cfg.disable_acb
    classes = cfg.num_actions
    trace = []

    if not use_stab and not use_acb:
        zeros = np.zeros((batch, cfg.fused_dim))

        def fusion(t, dec_state):
            return Tensor(zeros)

        return fusion, None, trace

    onehot = np.zeros((batch, classes))
    onehot[np.arange(batch), future_actions] = 1.0
    adaptive = use_stab and use_acb and not cfg.disable_aaa
    track = adaptive and pinned_alpha is None
    if cfg.disable_running_mean:
        mode = "raw"
    elif cfg.aaa_conventional_ema:
        mode = "ema"
    else:
        mode = "running_mean"
    state_box = [new_alpha_state(batch, cfg.gamma, cfg.tau_aaa, mode)]
    classifier = PrefixClassifier(store, batch) if track else None

    def fusion(t, dec_state):
        q = build_query(store, past_code, dec_state, Tensor(onehot))
        f_st = (
            stab_retrieve_soft(store, q, topk_labels, topk_weights, future_actions,
                               classes, cfg.stab_tuples)
            if use_stab
            else None
        )
        f_ac = (
            acb_retrieve(store, q, future_actions, classes, cfg.acb_tuples)
            if use_acb
            else None
        )
        if f_st is None:
            return f_ac
        if f_ac is None:
            return f_st
        if not adaptive:
            alpha = np.ones(batch)
        elif pinned_alpha is not None:
            alpha = pinned_alpha[t]
        else:
            alpha = np.asarray(state_box[0].alpha, dtype=np.float64)
            if alpha.ndim == 0:
                alpha = np.full(batch, float(alpha))
        trace.append(np.array(alpha, copy=True))
        return fuse(f_st, f_ac, alpha)

    def on_frame(t, pose):
        if classifier is None:
            return
        probs = classifier.step(pose.data)
        p = probs[np.arange(batch), future_actions]
        state_box[0] = update_alpha(state_box[0], -np.log(np.clip(p, 1e-12, 1.0)))

    return fusion, on_frame, trace


def mpm_total_loss(store, cfg, batch, eps, pinned_alpha=None):
    """Full prediction-model loss on one prepared batch:

    reconstruction + lambda_kl * KL(posterior || prior)
                   + lambda_ce * classification of the generated future.

    eps: (B, D) standard-normal draw for the reparameterized z.
    """
    post = encode_posterior(store, batch.future, batch.past, batch.future_onehot)
    prior, past_code = encode_prior_with_context(
        store, batch.past, batch.future_onehot
    )
    z = reparameterize(post, eps)
    n_batch = batch.future_onehot.shape[0]
    fusion, on_frame, trace = make_fusion(
        store, cfg, past_code, batch.topk_labels, batch.topk_weights,
        batch.future_actions, n_batch, pinned_alpha,
    )
    pred = decode(store, z, past_code, batch.future.shape[0], fusion, on_frame)
    rec = reconstruction_loss_batch(pred, batch.future)
    kl = kl_divergence(post, prior)
    ce = arm_loss_frames(store, pred, batch.future_onehot, cfg.tau_cls)
    total = add(add(rec, scale(kl, cfg.lambda_kl)), scale(ce, cfg.lambda_ce))
    return MpmLoss(
        total=total,
        rec=float(rec.data),
        kl=float(kl.data),
        ce=float(ce.data),
        alpha_trace=trace,
    )
