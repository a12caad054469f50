"""Adaptive fusion of the two bank features.

The fused feature is F = alpha/(1+alpha) * F_st + 1/(1+alpha) * F_ac.
alpha starts at 1 (plain mean) and, once the prediction step passes a
threshold, tracks the classifier's cross-entropy on the generated prefix via

    alpha <- gamma * alpha + (1 - gamma) * (ce - alpha)

clamped at 0 from below. The update's fixed point under constant ce is ce/2;
for gamma < 0.5 the iteration overshoots and oscillates toward it, which is
accepted behavior. alpha is a control signal only: no gradient flows through
it. Two alternate update modes exist for ablations: "ema" is the
conventional gamma*alpha + (1-gamma)*ce, "raw" uses ce directly.
"""

from dataclasses import dataclass, replace

import numpy as np

from .arm import arm_forward
from .diffcore import Tensor, add, as_tensor, mul
from .errors import ValidationError

UPDATE_MODES = ("running_mean", "ema", "raw")


@dataclass(frozen=True)
class AlphaState:
    alpha: object  # float, or (B,) array for batched decoding
    gamma: float = 0.9
    tau: int = 5
    t: int = 0
    mode: str = "running_mean"

    def __post_init__(self):
        if not 0.0 <= self.gamma <= 1.0:
            raise ValidationError(f"gamma must be in [0, 1], got {self.gamma}")
        if self.mode not in UPDATE_MODES:
            raise ValidationError(f"unknown alpha update mode {self.mode!r}")


def new_alpha_state(batch=None, gamma=0.9, tau=5, mode="running_mean"):
    """alpha starts at 1 for every decoded sequence."""
    alpha = 1.0 if batch is None else np.ones(batch)
    return AlphaState(alpha=alpha, gamma=gamma, tau=tau, t=0, mode=mode)


def update_alpha(state, ce_loss):
    """Advance one prediction step. ce_loss: scalar or (B,) array, >= 0.

    Below the step threshold alpha is pinned at 1 regardless of the loss; at
    and above it the configured update runs, clamped at 0 from below.
    """
    scalar = np.ndim(state.alpha) == 0
    if state.t < state.tau:
        pinned = 1.0 if scalar else np.ones_like(np.asarray(state.alpha, float))
        return replace(state, alpha=pinned, t=state.t + 1)
    ce = np.asarray(ce_loss, dtype=np.float64)
    a = np.asarray(state.alpha, dtype=np.float64)
    g = state.gamma
    if state.mode == "running_mean":
        nxt = g * a + (1.0 - g) * (ce - a)
    elif state.mode == "ema":
        nxt = g * a + (1.0 - g) * ce
    else:
        nxt = ce + 0.0 * a  # broadcast to alpha's shape
    nxt = np.maximum(nxt, 0.0)
    if scalar:
        nxt = float(nxt)
    return replace(state, alpha=nxt, t=state.t + 1)


def fuse(f_st, f_ac, alpha):
    """Convex combination of the two bank features, weighted by alpha.

    f_st, f_ac: (d,) or (B, d) tensors of equal shape; alpha: float or (B,)
    array, >= 0. The coefficients alpha/(1+alpha) and 1/(1+alpha) enter the
    graph as constants: the control signal is not differentiated.
    """
    f_st = as_tensor(f_st)
    f_ac = as_tensor(f_ac)
    if f_st.data.shape != f_ac.data.shape:
        raise ValidationError(
            f"fuse shapes differ: {f_st.data.shape} vs {f_ac.data.shape}"
        )
    a = np.asarray(alpha, dtype=np.float64)
    if np.any(a < 0):
        raise ValidationError("alpha must be >= 0")
    c_st = a / (1.0 + a)
    c_ac = 1.0 / (1.0 + a)
    if a.ndim == 1 and f_st.data.ndim == 2:
        c_st = c_st[:, None]
        c_ac = c_ac[:, None]
    return add(mul(f_st, Tensor(c_st)), mul(f_ac, Tensor(c_ac)))


def per_step_ce(store, generated_prefix, label, prefix="arm"):
    """Cross-entropy of the classifier's newest per-frame prediction.

    Runs the classifier over the whole generated prefix and scores the last
    row against the target label. Returns a plain float (control signal).
    """
    out = arm_forward(store, generated_prefix, prefix)
    p = out.final_probs[label.index if hasattr(label, "index") else int(label)]
    return float(-np.log(np.clip(p, 1e-12, 1.0)))
