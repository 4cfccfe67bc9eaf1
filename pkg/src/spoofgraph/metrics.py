"""Binary classification metrics: confusion counts, P/R/F1/Accuracy, AUC.

AUC uses the rank statistic with average ranks, which equals pairwise
counting of positive-vs-negative score orderings with ties worth one half.
Degenerate denominators (single-class labels, zero predicted positives, ...)
report the affected metric as 0.0 and list it in ``degenerate``.
"""

import numpy as np


class MetricsReport:
    FIELDS = ("AUC", "Accuracy", "F1", "Precision", "Recall",
              "N_TP", "N_FP", "N_TN", "N_FN", "threshold")

    def __init__(self, auc, accuracy, f1, precision, recall,
                 n_tp, n_fp, n_tn, n_fn, threshold, degenerate=()):
        self.AUC = auc
        self.Accuracy = accuracy
        self.F1 = f1
        self.Precision = precision
        self.Recall = recall
        self.N_TP = n_tp
        self.N_FP = n_fp
        self.N_TN = n_tn
        self.N_FN = n_fn
        self.threshold = threshold
        self.degenerate = tuple(degenerate)

    def to_text(self):
        lines = [f"{name}={getattr(self, name)!r}" for name in self.FIELDS]
        lines.append(f"degenerate={','.join(self.degenerate)}")
        return "\n".join(lines) + "\n"

    @classmethod
    def from_text(cls, text):
        kv = {}
        for line in text.splitlines():
            if not line.strip():
                continue
            key, _, val = line.partition("=")
            kv[key] = val
        deg = tuple(x for x in kv.pop("degenerate", "").split(",") if x)
        counts = {k: int(kv[k]) for k in ("N_TP", "N_FP", "N_TN", "N_FN")}
        return cls(float(kv["AUC"]), float(kv["Accuracy"]), float(kv["F1"]),
                   float(kv["Precision"]), float(kv["Recall"]),
                   counts["N_TP"], counts["N_FP"], counts["N_TN"], counts["N_FN"],
                   float(kv["threshold"]), deg)

    def __repr__(self):
        return (f"MetricsReport(AUC={self.AUC:.4f}, Accuracy={self.Accuracy:.4f}, "
                f"F1={self.F1:.4f}, Precision={self.Precision:.4f}, "
                f"Recall={self.Recall:.4f})")


def _average_ranks(scores):
    order = np.argsort(scores, kind="mergesort")
    ranks = np.empty(len(scores))
    sorted_scores = scores[order]
    i = 0
    while i < len(scores):
        j = i
        while j + 1 < len(scores) and sorted_scores[j + 1] == sorted_scores[i]:
            j += 1
        ranks[order[i:j + 1]] = 0.5 * (i + j) + 1.0   # 1-based average rank
        i = j + 1
    return ranks


def auc_score(scores, labels):
    """(auc, degenerate) where degenerate means one class is absent."""
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels)
    n_pos = int((labels == 1).sum())
    n_neg = int((labels == 0).sum())
    if n_pos == 0 or n_neg == 0:
        return 0.0, True
    ranks = _average_ranks(scores)
    pos_rank_sum = ranks[labels == 1].sum()
    auc = (pos_rank_sum - n_pos * (n_pos + 1) / 2.0) / (n_pos * n_neg)
    return float(auc), False


def compute_metrics(scores, decisions, labels, threshold=0.5):
    scores = np.asarray(scores, dtype=np.float64)
    decisions = np.asarray(decisions)
    labels = np.asarray(labels)
    if not (len(scores) == len(decisions) == len(labels)):
        raise ValueError("scores, decisions and labels must have equal length")
    if not np.all(np.isin(labels, (0, 1))):
        raise ValueError("labels must be 0 or 1")
    tp = int(np.sum((decisions == 1) & (labels == 1)))
    fp = int(np.sum((decisions == 1) & (labels == 0)))
    tn = int(np.sum((decisions == 0) & (labels == 0)))
    fn = int(np.sum((decisions == 0) & (labels == 1)))
    degenerate = []

    def ratio(num, den, name):
        if den == 0:
            degenerate.append(name)
            return 0.0
        return num / den

    precision = ratio(tp, tp + fp, "Precision")
    recall = ratio(tp, tp + fn, "Recall")
    f1 = ratio(2 * precision * recall, precision + recall, "F1")
    accuracy = ratio(tp + tn, len(labels), "Accuracy")
    auc, auc_degenerate = auc_score(scores, labels)
    if auc_degenerate:
        degenerate.append("AUC")
    return MetricsReport(auc, accuracy, f1, precision, recall,
                         tp, fp, tn, fn, threshold, degenerate)
