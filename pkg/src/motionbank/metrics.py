"""Evaluation metrics: distribution distance, recognition accuracy, and
pairwise diversity with and without time-warp alignment.

Feature extraction reuses a frozen, separately trained classifier: its final
hidden state is the perception feature. Metric values are comparable only
between runs of this repo that share an evaluation classifier.
"""

from dataclasses import dataclass

import numpy as np

from .arm import arm_forward, arm_scan
from .diffcore import Tensor, no_grad
from .errors import NumericsError, ValidationError

_EIG_FLOOR = -1e-8


@dataclass
class MomentStats:
    mu: np.ndarray  # (d,)
    cov: np.ndarray  # (d, d)
    count: int


def compute_stats(features):
    """Mean and unbiased covariance of row-stacked features (n >= 2)."""
    x = np.asarray(features, dtype=np.float64)
    if x.ndim != 2 or x.shape[0] < 2:
        raise ValidationError(
            f"need at least 2 feature rows to form moments, got {x.shape}"
        )
    mu = x.mean(axis=0)
    xc = x - mu
    cov = xc.T @ xc / (x.shape[0] - 1)
    return MomentStats(mu=mu, cov=cov, count=x.shape[0])


def extract_features(store, seq, prefix="arm"):
    """Final hidden state of the frozen classifier on one sequence."""
    return arm_forward(store, seq, prefix).features


def extract_features_batch(store, stacked, prefix="arm"):
    """Features and final probabilities for n equal-length sequences.

    stacked: (n, T, K) array. Returns (features (n, H), final_probs (n, C)).
    """
    arr = np.asarray(stacked, dtype=np.float64)
    if arr.ndim != 3:
        raise ValidationError(f"expected (n, frames, dim), got {arr.shape}")
    with no_grad():
        frames = [Tensor(arr[:, t, :]) for t in range(arr.shape[1])]
        probs, final_h = arm_scan(store, frames, prefix)
    return final_h.data.copy(), probs.data[-1].copy()


def _sym_check(m, name):
    if not np.allclose(m, m.T, atol=1e-9):
        raise ValidationError(f"{name} covariance is not symmetric within 1e-9")
    return (m + m.T) / 2.0


def _clamped_eig(w, context):
    if np.any(w < _EIG_FLOOR):
        raise NumericsError(
            f"{context}: eigenvalue {w.min():.3e} below tolerance {_EIG_FLOOR}"
        )
    return np.maximum(w, 0.0)


def fid(stats_gen, stats_gt):
    """Squared mean distance plus the covariance trace term:

    ||mu_gen - mu_gt||^2 + Tr(S_gen + S_gt - 2 (S_gen S_gt)^(1/2))

    The cross square root is computed through the symmetric product
    S_gt^(1/2) S_gen S_gt^(1/2), whose eigenvalues are those of S_gen S_gt.
    """
    if stats_gen.mu.shape != stats_gt.mu.shape:
        raise ValidationError(
            f"feature dims differ: {stats_gen.mu.shape} vs {stats_gt.mu.shape}"
        )
    cov_gen = _sym_check(stats_gen.cov, "generated")
    cov_gt = _sym_check(stats_gt.cov, "ground-truth")
    w, v = np.linalg.eigh(cov_gt)
    w = _clamped_eig(w, "ground-truth covariance")
    root = (v * np.sqrt(w)) @ v.T
    inner = root @ cov_gen @ root
    w2 = np.linalg.eigvalsh((inner + inner.T) / 2.0)
    w2 = _clamped_eig(w2, "cross-covariance product")
    dmu = stats_gen.mu - stats_gt.mu
    return float(
        dmu @ dmu + np.trace(cov_gen) + np.trace(cov_gt) - 2.0 * np.sqrt(w2).sum()
    )


def recognition_accuracy(pairs, store, prefix="arm"):
    """Fraction of sequences whose classifier argmax hits the target label.

    pairs: iterable of (sequence, label) with integer or ActionLabel labels.
    """
    pairs = list(pairs)
    if not pairs:
        raise ValidationError("recognition_accuracy on an empty set")
    hits = 0
    for seq, label in pairs:
        idx = label.index if hasattr(label, "index") else int(label)
        out = arm_forward(store, seq, prefix)
        hits += int(np.argmax(out.final_probs) == idx)
    return hits / len(pairs)


def _frames_of(seq):
    arr = seq.frames if hasattr(seq, "frames") else np.asarray(seq, dtype=np.float64)
    if arr.ndim != 2 or arr.shape[0] < 1:
        raise ValidationError(f"sequence must be nonempty (frames, dim), got {arr.shape}")
    return arr


def dtw_align(seq_a, seq_b):
    """Dynamic time warping with Euclidean frame cost and steps
    {(1,0), (0,1), (1,1)}; ties prefer (1,1), then (1,0).

    Returns (path, aligned_a, aligned_b): the optimal warp path as (i, j)
    pairs from (0,0) to (la-1, lb-1), and both sequences expanded along it.
    """
    a = _frames_of(seq_a)
    b = _frames_of(seq_b)
    if a.shape[1] != b.shape[1]:
        raise ValidationError(f"pose dims differ: {a.shape[1]} vs {b.shape[1]}")
    costs = np.linalg.norm(a[:, None, :] - b[None, :, :], axis=2)
    la, lb = costs.shape
    dp = np.empty((la, lb))
    choice = np.zeros((la, lb), dtype=np.int8)  # 0 diag, 1 up(i-1), 2 left(j-1)
    dp[0, 0] = costs[0, 0]
    for i in range(1, la):
        dp[i, 0] = dp[i - 1, 0] + costs[i, 0]
        choice[i, 0] = 1
    for j in range(1, lb):
        dp[0, j] = dp[0, j - 1] + costs[0, j]
        choice[0, j] = 2
    for i in range(1, la):
        for j in range(1, lb):
            cand = (dp[i - 1, j - 1], dp[i - 1, j], dp[i, j - 1])
            k = 0
            if cand[1] < cand[k]:
                k = 1
            if cand[2] < cand[k]:
                k = 2
            choice[i, j] = k
            dp[i, j] = cand[k] + costs[i, j]
    path = []
    i, j = la - 1, lb - 1
    while True:
        path.append((i, j))
        if i == 0 and j == 0:
            break
        k = choice[i, j]
        if k == 0:
            i, j = i - 1, j - 1
        elif k == 1:
            i -= 1
        else:
            j -= 1
    path.reverse()
    idx_a = np.array([p[0] for p in path])
    idx_b = np.array([p[1] for p in path])
    return path, a[idx_a], b[idx_b]


def dtw_cost(seq_a, seq_b):
    """Optimal DTW path cost (the DP accumulation, left-associated)."""
    a = _frames_of(seq_a)
    b = _frames_of(seq_b)
    if a.shape[1] != b.shape[1]:
        raise ValidationError(f"pose dims differ: {a.shape[1]} vs {b.shape[1]}")
    costs = np.linalg.norm(a[:, None, :] - b[None, :, :], axis=2)
    la, lb = costs.shape
    dp = np.empty((la, lb))
    dp[0, 0] = costs[0, 0]
    for i in range(1, la):
        dp[i, 0] = dp[i - 1, 0] + costs[i, 0]
    for j in range(1, lb):
        dp[0, j] = dp[0, j - 1] + costs[0, j]
    for i in range(1, la):
        for j in range(1, lb):
            dp[i, j] = min(dp[i - 1, j - 1], dp[i - 1, j], dp[i, j - 1]) + costs[i, j]
    return float(dp[-1, -1])


def _stacked_futures(samples, t_max=None):
    arrs = [_frames_of(s) for s in samples]
    dims = {a.shape[1] for a in arrs}
    if len(dims) > 1:
        raise ValidationError(f"mixed pose dimensions: {sorted(dims)}")
    if t_max is not None:
        for a in arrs:
            if a.shape[0] < t_max:
                raise ValidationError(
                    f"sequence length {a.shape[0]} shorter than t_max {t_max}"
                )
        arrs = [a[:t_max] for a in arrs]
    return arrs


def diversity(samples, t_max):
    """Mean pairwise per-frame distance over the first t_max frames:

    (2 / (G (G-1))) * sum_{i<j} (1/t_max) * sum_v ||y_i[v] - y_j[v]||
    """
    arrs = _stacked_futures(samples, t_max)
    g = len(arrs)
    if g < 2:
        raise ValidationError(f"diversity needs >= 2 samples, got {g}")
    x = np.stack(arrs)  # (G, T, K)
    dists = np.linalg.norm(x[:, None] - x[None, :], axis=3)  # (G, G, T)
    per_pair = dists.mean(axis=2)
    iu = np.triu_indices(g, k=1)
    return float(per_pair[iu].sum() * 2.0 / (g * (g - 1)))


def diversity_warped(samples):
    """Diversity after pairwise DTW alignment: each pair contributes its
    optimal path cost divided by the path length (the mean aligned-frame
    distance), with the same pair weighting as plain diversity."""
    arrs = _stacked_futures(samples)
    g = len(arrs)
    if g < 2:
        raise ValidationError(f"diversity_warped needs >= 2 samples, got {g}")
    lengths = {a.shape[0] for a in arrs}
    iu = np.triu_indices(g, k=1)
    if len(lengths) == 1:
        terms = _pairwise_dtw_means(np.stack(arrs), iu)
    else:
        terms = np.array(
            [_pair_dtw_mean(arrs[i], arrs[j]) for i, j in zip(*iu)]
        )
    return float(terms.sum() * 2.0 / (g * (g - 1)))


def _pair_dtw_mean(a, b):
    path, _, _ = dtw_align(a, b)
    return dtw_cost(a, b) / len(path)


def _pairwise_dtw_means(x, iu):
    """Vectorized DTW mean-aligned distance for all listed pairs of the
    equal-length stack x: (G, T, K). Tie preference matches dtw_align."""
    t_len = x.shape[1]
    ai, bj = iu
    costs = np.linalg.norm(x[ai][:, :, None, :] - x[bj][:, None, :, :], axis=3)
    pairs = costs.shape[0]
    dp = np.empty((pairs, t_len, t_len))
    plen = np.empty((pairs, t_len, t_len), dtype=np.int64)
    dp[:, 0, 0] = costs[:, 0, 0]
    plen[:, 0, 0] = 1
    for i in range(1, t_len):
        dp[:, i, 0] = dp[:, i - 1, 0] + costs[:, i, 0]
        plen[:, i, 0] = i + 1
    for j in range(1, t_len):
        dp[:, 0, j] = dp[:, 0, j - 1] + costs[:, 0, j]
        plen[:, 0, j] = j + 1
    for i in range(1, t_len):
        for j in range(1, t_len):
            cand = np.stack((dp[:, i - 1, j - 1], dp[:, i - 1, j], dp[:, i, j - 1]))
            pick = np.argmin(cand, axis=0)  # first minimum: diag, up, left
            rows = np.arange(pairs)
            dp[:, i, j] = cand[pick, rows] + costs[:, i, j]
            lens = np.stack(
                (plen[:, i - 1, j - 1], plen[:, i - 1, j], plen[:, i, j - 1])
            )
            plen[:, i, j] = lens[pick, rows] + 1
    return dp[:, -1, -1] / plen[:, -1, -1]
