"""Two-level neighborhood attention over the multi-relational graph.

Level one scores each node's same-relation neighbors and blends their raw
previous-layer embeddings.  Neighbors are also summarized per label group by
plain averaging.  Each (relation, group) pair yields a slot feature
ReLU(W_intra (h_v || attended + group_mean)).  Level two scores the slots
against the node's own embedding and mixes them on a softmax simplex sized
n_relations * n_groups, fixed even when slots are empty (zero vectors).

The final node representation concatenates the last layer's mixed embedding
with all of its slot features in (relation asc, group asc) order.

Per-node functions implement the contract one node at a time; layer_forward
is the vectorized equivalent used for training.  Segment reductions follow
the adjacency's (timestamp, txn_id) neighbor order, which node relabeling
cannot change, so the stack is exactly permutation equivariant.
"""

import numpy as np

from . import autodiff as ad
from . import kernels
from .store import glorot


def init_attention_params(store, d_in, rng, n_relations=3, d_l=64, q_dim=128,
                          n_layers=2, prefix="hga."):
    """Register projection, attention, intra and inter weights per layer."""
    for l in range(n_layers):
        a = d_in if l == 0 else d_l
        for r in range(n_relations):
            store.create(f"{prefix}l{l}.r{r}.proj", glorot(rng, a, d_l))
            store.create(f"{prefix}l{l}.r{r}.a", glorot(rng, 2 * d_l, 1, shape=(2 * d_l, 1)))
            store.create(f"{prefix}l{l}.r{r}.intra", glorot(rng, 2 * a, d_l))
        store.create(f"{prefix}l{l}.w1", glorot(rng, a, q_dim))
        store.create(f"{prefix}l{l}.w2", glorot(rng, d_l, q_dim))
        store.create(f"{prefix}l{l}.q", glorot(rng, q_dim, 1, shape=(q_dim, 1)))


def _split_a(store, l, r, d_l, prefix):
    a = store[f"{prefix}l{l}.r{r}.a"]
    return ad.slice_rows(a, 0, d_l), ad.slice_rows(a, d_l, 2 * d_l)


def node_intra_attention(store, state, v, nbrs, r, l=0, slope=0.2, prefix="hga."):
    """Eq-level single-node path: scores LeakyReLU(a^T [W h_v || W h_u]),
    softmax over neighbors, output sum alpha_u * h_u (previous-layer rows)."""
    state = ad.as_tensor(state)
    d = state.value.shape[1]
    d_l = store[f"{prefix}l{l}.r{r}.proj"].value.shape[1]
    if len(nbrs) == 0:
        return ad.Tensor(np.zeros(d))
    proj = ad.matmul(ad.gather_rows(state, np.concatenate([[v], nbrs])),
                     store[f"{prefix}l{l}.r{r}.proj"])
    a_top, a_bot = _split_a(store, l, r, d_l, prefix)
    c_v = ad.matmul(ad.slice_rows(proj, 0, 1), a_top)
    c_u = ad.matmul(ad.slice_rows(proj, 1, len(nbrs) + 1), a_bot)
    scores = ad.leaky_relu(c_v + c_u, slope)
    alpha = ad.softmax(scores, axis=0)
    weighted = ad.mul(alpha, ad.gather_rows(state, nbrs))
    return ad.reshape(ad.tensor_sum(weighted, axis=0), (-1,))


def node_intra_update(store, h_v, attended, r, l=0, prefix="hga."):
    """ReLU(W_intra (h_v || attended)) for one node."""
    h_v = ad.reshape(ad.as_tensor(h_v), (1, -1))
    attended = ad.reshape(ad.as_tensor(attended), (1, -1))
    cat = ad.concat([h_v, attended], axis=1)
    out = ad.relu(ad.matmul(cat, store[f"{prefix}l{l}.r{r}.intra"]))
    return ad.reshape(out, (-1,))


def node_group_mean(state, members):
    """Mean of member rows; empty membership yields the zero vector."""
    state = ad.as_tensor(state)
    if len(members) == 0:
        return ad.Tensor(np.zeros(state.value.shape[1]))
    return ad.tensor_mean(ad.gather_rows(state, members), axis=0)


def node_inter_attention(store, h_v, slot_feats, l=0, prefix="hga."):
    """Softmax-mixed slot features for one node.

    omega_s = q^T tanh(W1 h_v + W2 slot_s); alpha = softmax over slots;
    returns sum alpha_s * slot_s.
    """
    h_v = ad.reshape(ad.as_tensor(h_v), (1, -1))
    base = ad.matmul(h_v, store[f"{prefix}l{l}.w1"])
    omegas = []
    for s in slot_feats:
        s2 = ad.reshape(s, (1, -1))
        omegas.append(ad.matmul(ad.tanh(base + ad.matmul(s2, store[f"{prefix}l{l}.w2"])),
                                store[f"{prefix}l{l}.q"]))
    scores = ad.concat(omegas, axis=0)          # (S, 1)
    alpha = ad.softmax(scores, axis=0)
    out = None
    for k, s in enumerate(slot_feats):
        term = ad.mul(ad.reshape(ad.slice_rows(alpha, k, k + 1), (-1,)), s)
        out = term if out is None else out + term
    return out


def final_embedding(h_v, slot_feats):
    """h_v || slot features in fixed slot order."""
    parts = [ad.reshape(ad.as_tensor(h_v), (1, -1))]
    parts.extend(ad.reshape(s, (1, -1)) for s in slot_feats)
    return ad.reshape(ad.concat(parts, axis=1), (-1,))


def _segment_softmax(scores, seg, n):
    """Per-segment softmax of an (E, 1) tensor; segments must be contiguous."""
    m = kernels.segment_max(scores.value[:, 0], seg, n)
    shift = np.where(np.isfinite(m), m, 0.0)[seg][:, None]
    ex = ad.exp(scores - shift)
    denom = ad.scatter_sum(ex, seg, n)
    # Only occupied segments are gathered back, so denom >= exp(0) there.
    return ad.mul(ex, ad.div(1.0, ad.gather_rows(denom, seg)))


def layer_forward(store, h, relation_pairs, group_labels, n_groups, l,
                  slope=0.2, prefix="hga."):
    """One attention layer over all nodes.

    relation_pairs: per relation (dst, src) arrays with contiguous dst
    segments.  group_labels: per-node int array partitioning neighbors.
    Returns (mixed embedding (n, d_l), slot list of n_relations*n_groups
    tensors in (relation asc, group asc) order).
    """
    h = ad.as_tensor(h)
    n = h.value.shape[0]
    slots = []
    for r, (dst, src) in enumerate(relation_pairs):
        d_l = store[f"{prefix}l{l}.r{r}.proj"].value.shape[1]
        proj = ad.matmul(h, store[f"{prefix}l{l}.r{r}.proj"])
        a_top, a_bot = _split_a(store, l, r, d_l, prefix)
        c_dst = ad.matmul(proj, a_top)
        c_src = ad.matmul(proj, a_bot)
        scores = ad.leaky_relu(ad.gather_rows(c_dst, dst) + ad.gather_rows(c_src, src), slope)
        alpha = _segment_softmax(scores, dst, n)
        attended = ad.scatter_sum(ad.mul(alpha, ad.gather_rows(h, src)), dst, n)
        for g in range(n_groups):
            sel = np.nonzero(group_labels[src] == g)[0] if len(src) else np.zeros(0, dtype=np.int64)
            sums = ad.scatter_sum(ad.gather_rows(h, src[sel]), dst[sel], n)
            counts = np.bincount(dst[sel], minlength=n).astype(np.float64)
            mean = ad.mul(sums, (1.0 / np.maximum(counts, 1.0))[:, None])
            cat = ad.concat([h, attended + mean], axis=1)
            slots.append(ad.relu(ad.matmul(cat, store[f"{prefix}l{l}.r{r}.intra"])))
    base = ad.matmul(h, store[f"{prefix}l{l}.w1"])
    omegas = [ad.matmul(ad.tanh(base + ad.matmul(s, store[f"{prefix}l{l}.w2"])),
                        store[f"{prefix}l{l}.q"]) for s in slots]
    stacked = np.stack([o.value[:, 0] for o in omegas])
    m = stacked.max(axis=0)[:, None]
    exps = [ad.exp(o - m) for o in omegas]
    denom = exps[0]
    for e in exps[1:]:
        denom = denom + e
    inv = ad.div(1.0, denom)
    out = None
    for e, s in zip(exps, slots):
        term = ad.mul(ad.mul(e, inv), s)
        out = term if out is None else out + term
    return out, slots


def attention_forward(store, h0, relation_pairs, group_labels, n_groups=2,
                      n_layers=2, slope=0.2, prefix="hga."):
    """Stack layers; returns (n, d_l * (1 + n_relations * n_groups)) final
    embeddings: last mixed state concatenated with last-layer slots."""
    h = ad.as_tensor(h0)
    slots = []
    for l in range(n_layers):
        h, slots = layer_forward(store, h, relation_pairs, group_labels,
                                 n_groups, l, slope, prefix)
    return ad.concat([h] + slots, axis=1)


def graph_relation_pairs(graph):
    """Capped (dst, src) arrays for each relation of a built graph."""
    return [graph.directed_pairs(r) for r in range(len(graph.edges))]
