"""Retrieval memories: the transition bank and the characteristic bank.

The transition bank holds one cell of learnable key/value tuples per
(past action, future action) pair; the characteristic bank holds one cell
per future action. Retrieval is an exact linear scan: dot-product similarity
against every key in the cell, take the best match, and scale its value by
that similarity before the bank's output MLP. Soft retrieval repeats this
over the classifier's top-k past-action guesses and combines the branch
outputs by their renormalized probabilities.

Bank parameters are flat (rows, dim) tensors; a cell is a contiguous block
of rows. The argmax index is a constant of the forward pass: gradients reach
the winning tuple only.
"""

import numpy as np

from .diffcore import add, as_tensor, concat, gather_rows, mul, reshape, tsum
from .errors import ValidationError
from .nn import add_linear, add_mlp, linear, mlp, mlp_depth


def add_stab_params(store, rng, classes, tuples_per_cell, key_dim, value_dim,
                    fused_dim, mlp_hidden, prefix="stab"):
    rows = classes * classes * tuples_per_cell
    bound = 1.0 / np.sqrt(key_dim)
    store.add(prefix + ".keys", rng.uniform(-bound, bound, (rows, key_dim)))
    store.add(prefix + ".values", rng.uniform(-bound, bound, (rows, value_dim)))
    add_mlp(store, rng, prefix + ".mlp", [value_dim] + list(mlp_hidden) + [fused_dim])


def add_acb_params(store, rng, classes, tuples_per_cell, key_dim, value_dim,
                   fused_dim, mlp_hidden, prefix="acb"):
    rows = classes * tuples_per_cell
    bound = 1.0 / np.sqrt(key_dim)
    store.add(prefix + ".keys", rng.uniform(-bound, bound, (rows, key_dim)))
    store.add(prefix + ".values", rng.uniform(-bound, bound, (rows, value_dim)))
    add_mlp(store, rng, prefix + ".mlp", [value_dim] + list(mlp_hidden) + [fused_dim])


def add_query_params(store, rng, hidden_dim, classes, key_dim, prefix="query"):
    add_linear(store, rng, prefix + ".proj", 2 * hidden_dim + classes, key_dim)


def build_query(store, past_code, decoder_state, action_onehot, prefix="query"):
    """Project [past summary, decoder state, action one-hot] to key space.

    All three arguments are (B, ·) tensors/arrays; returns (B, key_dim).
    """
    parts = [as_tensor(past_code), as_tensor(decoder_state), as_tensor(action_onehot)]
    return linear(store, prefix + ".proj", concat(parts, axis=-1))


def retrieve_hard(cell_keys, cell_values, query):
    """Best-match retrieval inside one cell.

    cell_keys: (M, d_k), cell_values: (M, d_v), query: (d_k,), all Tensors.
    Returns (max similarity: scalar Tensor, winning index: int,
    similarity-scaled value: (d_v,) Tensor). Ties go to the lowest index.
    """
    keys = as_tensor(cell_keys)
    values = as_tensor(cell_values)
    q = as_tensor(query)
    if keys.data.ndim != 2 or keys.data.shape[0] == 0:
        raise ValidationError(f"bank cell must be (M>0, d_k), got {keys.data.shape}")
    if q.data.shape != (keys.data.shape[1],):
        raise ValidationError(
            f"query dim {q.data.shape} does not match keys {keys.data.shape}"
        )
    m = keys.data.shape[0]
    sims = tsum(mul(keys, reshape(q, (1, keys.data.shape[1]))), axis=1)  # (M,)
    win = int(np.argmax(sims.data))
    mask = np.zeros(m)
    mask[win] = 1.0
    max_sim = tsum(mul(sims, mask))
    value = reshape(gather_rows(values, np.array([win])), (values.data.shape[1],))
    return max_sim, win, mul(max_sim, value)


def _retrieve_batch(store, bank_prefix, row_idx, queries):
    """Vectorized hard retrieval. row_idx: (B, M) rows into the bank tensors;
    queries: (B, d_k) Tensor. Returns (max sims (B,), winners (B,), scaled
    values (B, d_v))."""
    keys = store[bank_prefix + ".keys"]
    values = store[bank_prefix + ".values"]
    batch, m = row_idx.shape
    d_k = keys.data.shape[1]
    gathered = reshape(gather_rows(keys, row_idx.reshape(-1)), (batch, m, d_k))
    sims = tsum(mul(gathered, reshape(queries, (batch, 1, d_k))), axis=2)  # (B, M)
    win = np.argmax(sims.data, axis=1)
    mask = np.zeros((batch, m))
    mask[np.arange(batch), win] = 1.0
    max_sims = tsum(mul(sims, mask), axis=1)  # (B,)
    win_rows = row_idx[np.arange(batch), win]
    win_values = gather_rows(values, win_rows)  # (B, d_v)
    scaled = mul(reshape(max_sims, (batch, 1)), win_values)
    return max_sims, win_rows, scaled


def stab_cell_rows(past_action, future_action, classes, tuples_per_cell):
    """Row indices of one transition cell. Arguments may be scalars or arrays."""
    past_action = np.asarray(past_action, dtype=np.intp)
    future_action = np.asarray(future_action, dtype=np.intp)
    if np.any(past_action < 0) or np.any(past_action >= classes):
        raise ValidationError(f"past action out of range [0, {classes})")
    if np.any(future_action < 0) or np.any(future_action >= classes):
        raise ValidationError(f"future action out of range [0, {classes})")
    cell = past_action * classes + future_action
    base = cell * tuples_per_cell
    return base[..., None] + np.arange(tuples_per_cell)


def acb_cell_rows(future_action, classes, tuples_per_cell):
    future_action = np.asarray(future_action, dtype=np.intp)
    if np.any(future_action < 0) or np.any(future_action >= classes):
        raise ValidationError(f"future action out of range [0, {classes})")
    base = future_action * tuples_per_cell
    return base[..., None] + np.arange(tuples_per_cell)


def stab_retrieve_soft(store, queries, topk_labels, topk_weights, future_actions,
                       classes, tuples_per_cell, prefix="stab"):
    """Soft retrieval over the classifier's top-k past-action guesses.

    queries: (B, d_k) Tensor; topk_labels/topk_weights: (B, k) arrays;
    future_actions: (B,) ints. Returns (B, fused_dim) Tensor: the per-branch
    MLP outputs combined by the given weights. Weights must sum to 1 per row.
    """
    topk_labels = np.asarray(topk_labels, dtype=np.intp)
    topk_weights = np.asarray(topk_weights, dtype=np.float64)
    if topk_labels.ndim != 2 or topk_labels.shape != topk_weights.shape:
        raise ValidationError(
            f"topk labels {topk_labels.shape} and weights {topk_weights.shape} "
            f"must both be (batch, k)"
        )
    sums = topk_weights.sum(axis=1)
    if np.any(np.abs(sums - 1.0) > 1e-6):
        raise ValidationError("top-k weights must sum to 1 per row")
    depth = mlp_depth(store, prefix + ".mlp")
    batch, k = topk_labels.shape
    out = None
    for j in range(k):
        rows = stab_cell_rows(topk_labels[:, j], future_actions, classes,
                              tuples_per_cell)
        _, _, scaled = _retrieve_batch(store, prefix, rows, queries)
        branch = mlp(store, prefix + ".mlp", scaled, depth)
        term = mul(branch, topk_weights[:, j : j + 1])
        out = term if out is None else add(out, term)
    return out


def acb_retrieve(store, queries, future_actions, classes, tuples_per_cell,
                 prefix="acb"):
    """Characteristic retrieval: hard search in the future action's cell,
    then the bank MLP. queries: (B, d_k) Tensor; returns (B, fused_dim)."""
    rows = acb_cell_rows(future_actions, classes, tuples_per_cell)
    _, _, scaled = _retrieve_batch(store, prefix, rows, queries)
    return mlp(store, prefix + ".mlp", scaled, mlp_depth(store, prefix + ".mlp"))


def inspect_cell(store, bank_prefix, rows):
    """Debug dump of one cell: keys, values, and their norms."""
    keys = store[bank_prefix + ".keys"].data[rows]
    values = store[bank_prefix + ".values"].data[rows]
    return {
        "rows": [int(r) for r in rows],
        "keys": keys.tolist(),
        "values": values.tolist(),
        "key_norms": np.linalg.norm(keys, axis=1).tolist(),
        "value_norms": np.linalg.norm(values, axis=1).tolist(),
    }
