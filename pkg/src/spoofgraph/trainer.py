"""End-to-end training: encode sequences, concatenate with normalized raw
features, refresh pseudo-labels, run the attention stack, classify, optimize.

Variants:
  full       everything on
  no_pseudo  supervised labels only; neighbor grouping falls back to known
             train labels (group 0 where unknown)
  no_ode     recurrent updates only, inter-observation gaps ignored
  no_hetero  relations collapsed to their union, a single neighbor group

Feature normalization and the sequence time scale come from the train split
only and ride along in the checkpoint under the ``meta.`` prefix.
"""

import os

import numpy as np

from . import attention as att
from . import autodiff as ad
from . import graph as gr
from . import ode_encoder as ode
from . import wavelets as wav
from .config import run_config_from_dict, parse_kv_file
from .metrics import auc_score, compute_metrics
from .store import ParameterStore, glorot


class TrainResult:
    def __init__(self, store, report, trace, best_epoch):
        self.store = store
        self.report = report
        self.trace = trace          # list of (epoch, loss, val_auc)
        self.best_epoch = best_epoch


def decide(prob_positive, z):
    """1 iff p > z, elementwise; scalars in, scalar out."""
    p = np.asarray(prob_positive)
    out = (p > z).astype(np.int64)
    return int(out) if out.ndim == 0 else out


def classify(store, h_final, prefix="clf."):
    """Two-layer head with a softmax over the two classes."""
    h = ad.relu(ad.matmul(h_final, store[prefix + "w1"]) + store[prefix + "b1"])
    logits = ad.matmul(h, store[prefix + "w2"]) + store[prefix + "b2"]
    return ad.softmax(logits, axis=1)


def cross_entropy(probs, labels, idx, weights=None):
    """Mean -sum_c y_c log p_c over the index set; log clamped at 1e-12.

    weights, when given, produce a weighted mean (sum w*ce / sum w).
    """
    idx = np.asarray(idx, dtype=np.int64)
    if len(idx) == 0:
        raise ValueError("empty supervision mask")
    y = np.asarray(labels, dtype=np.int64)
    onehot = np.zeros((len(idx), 2))
    onehot[np.arange(len(idx)), y] = 1.0
    p_sel = ad.gather_rows(probs, idx)
    ce = ad.neg(ad.tensor_sum(ad.mul(onehot, ad.log(p_sel, floor=1e-12)), axis=1))
    if weights is None:
        return ad.tensor_mean(ce)
    w = np.asarray(weights, dtype=np.float64)
    return ad.mul(ad.tensor_sum(ad.mul(ce, w)), 1.0 / float(w.sum()))


def stratified_split(labels, fracs, rng):
    """Per-class shuffled split into train/valid/test masks."""
    labels = np.asarray(labels)
    n = len(labels)
    masks = [np.zeros(n, dtype=bool) for _ in range(3)]
    for c in np.unique(labels):
        idx = np.nonzero(labels == c)[0]
        idx = idx[rng.permutation(len(idx))]
        n_train = int(round(fracs[0] * len(idx)))
        n_valid = int(round(fracs[1] * len(idx)))
        masks[0][idx[:n_train]] = True
        masks[1][idx[n_train:n_train + n_valid]] = True
        masks[2][idx[n_train + n_valid:]] = True
    return masks


def _variant_layout(cfg):
    n_rel = 1 if cfg.variant == "no_hetero" else gr.N_RELATIONS
    n_groups = 1 if cfg.variant == "no_hetero" else 2
    return n_rel, n_groups


def init_model(store, cfg, rng):
    d_in = cfg.d_raw + cfg.h_dim
    n_rel, n_groups = _variant_layout(cfg)
    ode.init_encoder_params(store, cfg.d_raw, cfg.h_dim, rng)
    wav.init_pseudo_params(store, d_in, rng, cfg.c_wav, cfg.pre_hidden,
                           cfg.spec_dim, cfg.post_hidden, cfg.agg)
    att.init_attention_params(store, d_in, rng, n_rel, cfg.d_l, cfg.q_dim,
                              cfg.n_layers)
    final_width = cfg.d_l * (1 + n_rel * n_groups)
    store.create("clf.w1", glorot(rng, final_width, cfg.clf_hidden))
    store.create("clf.b1", np.zeros(cfg.clf_hidden))
    store.create("clf.w2", glorot(rng, cfg.clf_hidden, 2))
    store.create("clf.b2", np.zeros(2))


def _encode(store, cfg, seqs, time_scale):
    if cfg.variant == "no_ode":
        return ode.encode_rnn_variant(seqs, store, cfg.h_dim)
    return ode.encode_batch(seqs, store, cfg.h_dim, cfg.solver, cfg.ode_steps,
                            time_scale)


def model_forward(store, cfg, x_norm, seqs, relation_pairs, group_labels,
                  time_scale):
    """Probabilities (n, 2) as a tensor; grads flow to every live parameter."""
    n_rel, n_groups = _variant_layout(cfg)
    h_seq = _encode(store, cfg, seqs, time_scale)
    x = ad.concat([ad.Tensor(x_norm), h_seq], axis=1)
    h_final = att.attention_forward(store, x, relation_pairs, group_labels,
                                    n_groups, cfg.n_layers, cfg.slope)
    return classify(store, h_final), x


def _group_labels(cfg, pseudo_full, labels_vis):
    if cfg.variant == "no_hetero":
        return np.zeros(len(labels_vis), dtype=np.int64)
    if cfg.variant == "no_pseudo":
        return np.where(labels_vis >= 0, labels_vis, 0).astype(np.int64)
    return pseudo_full


def _supervision(cfg, labels_vis, pseudo_full, class_weight):
    train_idx = np.nonzero(labels_vis >= 0)[0]
    sup_idx = [train_idx]
    sup_lab = [labels_vis[train_idx]]
    sup_w = [class_weight[labels_vis[train_idx]]]
    if cfg.variant != "no_pseudo":
        un_idx = np.nonzero(labels_vis < 0)[0]
        if len(un_idx):
            sup_idx.append(un_idx)
            sup_lab.append(pseudo_full[un_idx])
            sup_w.append(cfg.pseudo_weight * class_weight[pseudo_full[un_idx]])
    return (np.concatenate(sup_idx), np.concatenate(sup_lab),
            np.concatenate(sup_w))


def _prepare(cfg, records):
    graph = gr.build_graph(records, cfg.window_seconds,
                           price_band_frac=cfg.price_band_frac,
                           degree_cap=cfg.degree_cap)
    # One notion of "recent" everywhere: the same window that creates edges
    # bounds each node's history, so sequence statistics do not drift as a
    # timeline accumulates more past.
    seqs = gr.sequences_from_transactions(records, cfg.max_len,
                                          time_window=cfg.window_seconds)
    if cfg.variant == "no_hetero":
        pairs = [gr.union_pairs(graph)]
    else:
        pairs = att.graph_relation_pairs(graph)
    coo = wav.normalized_laplacian(graph)
    return graph, seqs, pairs, coo


def _normalize(graph, seqs, mean, std):
    x_norm = (graph.features - mean) / std
    seqs_n = [ode.ObservationSequence(s.times, (s.observations - mean) / std)
              for s in seqs]
    return x_norm, seqs_n


def train(cfg, records):
    """Full training run; returns the best-validation-epoch model and the
    test-split metrics, with a per-epoch (epoch, loss, val_auc) trace."""
    rng = np.random.default_rng(cfg.seed)
    graph, seqs, pairs, coo = _prepare(cfg, records)
    if np.any(graph.labels < 0):
        raise ValueError("training data must be fully labeled")
    tr_mask, va_mask, te_mask = stratified_split(
        graph.labels, (cfg.train_frac, cfg.valid_frac, cfg.test_frac), rng)
    graph.train_mask, graph.valid_mask, graph.test_mask = tr_mask, va_mask, te_mask
    train_lab = graph.labels[tr_mask]
    if len(np.unique(train_lab)) < 2:
        raise ValueError("train split lost one class entirely")

    mean = graph.features[tr_mask].mean(axis=0)
    std = np.maximum(graph.features[tr_mask].std(axis=0), 1e-8)
    time_scale = ode.median_gap_scale([seqs[i] for i in np.nonzero(tr_mask)[0]])
    x_norm, seqs_n = _normalize(graph, seqs, mean, std)

    store = ParameterStore()
    init_model(store, cfg, rng)
    store.create("meta.feat_mean", mean)
    store.create("meta.feat_std", std)
    store.create("meta.time_scale", np.asarray(time_scale))
    store.freeze("meta.")

    labels_vis = np.where(tr_mask, graph.labels, -1).astype(np.int64)
    counts = np.bincount(train_lab, minlength=2).astype(np.float64)
    if cfg.balance_loss:
        class_weight = len(train_lab) / (2.0 * np.maximum(counts, 1.0))
    else:
        class_weight = np.ones(2)

    use_pseudo = cfg.variant != "no_pseudo"
    if use_pseudo and cfg.pretrain_epochs > 0:
        with ad.no_grad():
            h0 = _encode(store, cfg, seqs_n, time_scale)
            x0 = np.concatenate([x_norm, h0.value], axis=1)
        wav.pretrain(store, x0, graph.labels, tr_mask, coo,
                     cfg.pretrain_epochs, cfg.pretrain_lr, cfg.c_wav, cfg.agg)
    elif use_pseudo:
        store.freeze("bwgnn.")

    va_idx = np.nonzero(va_mask)[0]
    te_idx = np.nonzero(te_mask)[0]
    trace = []
    best = (-np.inf, 0, store.snapshot())
    pseudo_full = np.where(labels_vis >= 0, labels_vis, 0).astype(np.int64)
    for epoch in range(1, cfg.epochs + 1):
        if use_pseudo and (cfg.refresh_pseudo or epoch == 1):
            with ad.no_grad():
                h_now = _encode(store, cfg, seqs_n, time_scale)
                x_now = np.concatenate([x_norm, h_now.value], axis=1)
                p = wav.pseudo_forward(store, x_now, coo, cfg.c_wav, cfg.agg)
            pseudo_full = wav.threshold_labels(p.value, cfg.z_pseudo, labels_vis)
        groups = _group_labels(cfg, pseudo_full, labels_vis)
        probs, _ = model_forward(store, cfg, x_norm, seqs_n, pairs, groups,
                                 time_scale)
        sup_idx, sup_lab, sup_w = _supervision(cfg, labels_vis, pseudo_full,
                                               class_weight)
        loss = cross_entropy(probs, sup_lab, sup_idx, sup_w)
        if not np.isfinite(loss.value):
            raise RuntimeError(f"non-finite loss at epoch {epoch}")
        store.zero_grad()
        loss.backward()
        store.adam_step(lr=cfg.lr)
        scores = probs.value[:, 1]
        val_auc, _ = auc_score(scores[va_idx], graph.labels[va_idx])
        trace.append((epoch, float(loss.value), val_auc))
        if val_auc > best[0]:
            best = (val_auc, epoch, store.snapshot())
    if cfg.epochs > 0:
        store.restore(best[2])

    with ad.no_grad():
        if use_pseudo:
            h_now = _encode(store, cfg, seqs_n, time_scale)
            x_now = np.concatenate([x_norm, h_now.value], axis=1)
            p = wav.pseudo_forward(store, x_now, coo, cfg.c_wav, cfg.agg)
            pseudo_full = wav.threshold_labels(p.value, cfg.z_pseudo, labels_vis)
        groups = _group_labels(cfg, pseudo_full, labels_vis)
        probs, _ = model_forward(store, cfg, x_norm, seqs_n, pairs, groups,
                                 time_scale)
    scores = probs.value[te_idx, 1]
    report = compute_metrics(scores, decide(scores, cfg.z_decision),
                             graph.labels[te_idx], cfg.z_decision)
    return TrainResult(store, report, trace, best[1])


def predict(store, cfg, records):
    """Scores for every node of a (possibly unlabeled) record set.

    No ground-truth labels are consulted: grouping relies on pseudo-labels
    alone (or group 0 for the variants that do not use them).
    """
    graph, seqs, pairs, coo = _prepare(cfg, records)
    mean = store["meta.feat_mean"].value
    std = store["meta.feat_std"].value
    time_scale = float(store["meta.time_scale"].value)
    x_norm, seqs_n = _normalize(graph, seqs, mean, std)
    labels_vis = np.full(graph.n, -1, dtype=np.int64)
    with ad.no_grad():
        pseudo_full = np.zeros(graph.n, dtype=np.int64)
        if cfg.variant != "no_pseudo":
            h_now = _encode(store, cfg, seqs_n, time_scale)
            x_now = np.concatenate([x_norm, h_now.value], axis=1)
            p = wav.pseudo_forward(store, x_now, coo, cfg.c_wav, cfg.agg)
            pseudo_full = wav.threshold_labels(p.value, cfg.z_pseudo, labels_vis)
        groups = _group_labels(cfg, pseudo_full, labels_vis)
        probs, _ = model_forward(store, cfg, x_norm, seqs_n, pairs, groups,
                                 time_scale)
    return probs.value[:, 1], graph


def evaluate(store, cfg, records):
    """Metrics over every labeled node in the record set."""
    scores, graph = predict(store, cfg, records)
    labeled = graph.labels >= 0
    if not labeled.any():
        raise ValueError("no labeled nodes to evaluate")
    s = scores[labeled]
    return compute_metrics(s, decide(s, cfg.z_decision),
                           graph.labels[labeled], cfg.z_decision)


def ablate(cfg, records, variants=("full", "no_pseudo", "no_ode", "no_hetero")):
    """Train each variant with identical budgets and seed; dict of reports."""
    seen = []
    for v in variants:
        if v not in seen:
            seen.append(v)
    out = {}
    for v in seen:
        out[v] = train(cfg.replace(variant=v), records).report
    return out


def rolling_eval(cfg, records):
    """Timeline blocks: bootstrap-train on the first, then alternately score
    the next block out-of-sample and fold it into the pool with a retrain.

    Every reported block is predicted by a model whose training pool contains
    only earlier blocks, so report k is a deployment-style forward test."""
    recs = gr.canonical_order(records)
    times = np.array([r.timestamp for r in recs])
    t0, t1 = times.min(), times.max()
    if t1 <= t0:
        raise ValueError("timestamps span a single block")
    edges = np.linspace(t0, t1, cfg.rolling_blocks + 1)
    block = np.minimum(np.searchsorted(edges[1:], times, side="right"),
                       cfg.rolling_blocks - 1)
    if len(np.unique(block)) < 2:
        raise ValueError("timestamps span a single block")
    reports = []
    pool = [r for r, b in zip(recs, block) if b == 0]
    result = train(cfg, pool)
    for b in range(1, cfg.rolling_blocks):
        new = [r for r, bb in zip(recs, block) if bb == b]
        if not new:
            continue
        cum = pool + new
        scores, g = predict(result.store, cfg, cum)
        mask = np.isin(g.txn_ids, [r.txn_id for r in new])
        s = scores[mask]
        labels = g.labels[mask]
        reports.append(compute_metrics(s, decide(s, cfg.z_decision), labels,
                                       cfg.z_decision))
        pool = cum
        result = train(cfg, pool)
    return reports


def save_checkpoint(store, cfg, path):
    store.save(path)
    with open(os.path.join(path, "config.txt"), "w") as fh:
        fh.write(cfg.to_text())


def load_checkpoint(path):
    store = ParameterStore.load(path)
    cfg = run_config_from_dict(parse_kv_file(os.path.join(path, "config.txt")))
    return store, cfg
