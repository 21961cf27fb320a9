"""Confusion matrix, per-class and aggregate classification metrics,
one-vs-rest ROC-AUC, and CSV report export.

Confusion matrix orientation: rows are actual classes, columns are
predicted classes. Per-class metrics use the one-vs-rest reduction:

    accuracy    = (TP + TN) / (TP + TN + FP + FN)
    precision   = TP / (TP + FP)
    sensitivity = TP / (TP + FN)       (recall)
    specificity = TN / (TN + FP)
    f1          = 2 * precision * sensitivity / (precision + sensitivity)

Any ratio with a zero denominator evaluates to 0 and is flagged.
"""

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import ArgumentError


@dataclass
class ClassMetrics:
    tp: int
    tn: int
    fp: int
    fn: int
    accuracy: float
    precision: float
    sensitivity: float
    specificity: float
    f1: float
    degenerate: list = field(default_factory=list)  # metric names hit by 0/0


def confusion_matrix(y_true, y_pred, num_classes):
    y_true = list(y_true)
    y_pred = list(y_pred)
    if len(y_true) != len(y_pred):
        raise ArgumentError(
            f"confusion_matrix: {len(y_true)} true vs {len(y_pred)} predicted labels")
    cm = np.zeros((num_classes, num_classes), dtype=np.int64)
    for a, p in zip(y_true, y_pred):
        if not (0 <= a < num_classes and 0 <= p < num_classes):
            raise ArgumentError(f"label ({a}, {p}) out of range for K={num_classes}")
        cm[a, p] += 1
    return cm


def _ratio(num, den, name, flags):
    if den == 0:
        flags.append(name)
        return 0.0
    return num / den


def per_class_metrics(cm):
    cm = np.asarray(cm, dtype=np.int64)
    total = int(cm.sum())
    if total == 0:
        raise ArgumentError("per_class_metrics: all-zero confusion matrix")
    out = []
    for k in range(cm.shape[0]):
        tp = int(cm[k, k])
        fp = int(cm[:, k].sum()) - tp
        fn = int(cm[k, :].sum()) - tp
        tn = total - tp - fp - fn
        flags = []
        precision = _ratio(tp, tp + fp, "precision", flags)
        sensitivity = _ratio(tp, tp + fn, "sensitivity", flags)
        specificity = _ratio(tn, tn + fp, "specificity", flags)
        f1 = _ratio(2 * precision * sensitivity, precision + sensitivity, "f1", flags)
        out.append(ClassMetrics(
            tp=tp, tn=tn, fp=fp, fn=fn,
            accuracy=(tp + tn) / total,
            precision=precision, sensitivity=sensitivity,
            specificity=specificity, f1=f1, degenerate=flags))
    return out


def overall_metrics(cm):
    """Overall accuracy (trace/total) plus macro and micro aggregates."""
    cm = np.asarray(cm, dtype=np.int64)
    per = per_class_metrics(cm)
    total = int(cm.sum())
    k = len(per)
    tp_sum = sum(m.tp for m in per)
    fp_sum = sum(m.fp for m in per)
    fn_sum = sum(m.fn for m in per)
    return {
        "accuracy": int(np.trace(cm)) / total,
        "macro_precision": sum(m.precision for m in per) / k,
        "macro_sensitivity": sum(m.sensitivity for m in per) / k,
        "macro_specificity": sum(m.specificity for m in per) / k,
        "macro_f1": sum(m.f1 for m in per) / k,
        "micro_precision": tp_sum / (tp_sum + fp_sum) if tp_sum + fp_sum else 0.0,
        "micro_sensitivity": tp_sum / (tp_sum + fn_sum) if tp_sum + fn_sum else 0.0,
    }


def roc_auc_ovr(scores, y_true, k):
    """One-vs-rest ROC for class k from per-class scores (n, K).

    AUC is the Mann-Whitney statistic (ties get half credit), computed
    via ranks. Returns (auc, sweep) where sweep is a list of
    (threshold, fpr, tpr) over all distinct scores descending, with
    +inf/-inf sentinels so the curve spans (0,0) to (1,1).
    """
    scores = np.asarray(scores)
    y_true = np.asarray(list(y_true))
    if scores.ndim != 2 or scores.shape[0] != y_true.shape[0]:
        raise ArgumentError(
            f"roc_auc_ovr: scores {scores.shape} vs {y_true.shape[0]} labels")
    s = scores[:, k].astype(np.float64)
    pos = y_true == k
    n_pos = int(pos.sum())
    n_neg = int((~pos).sum())
    if n_pos == 0 or n_neg == 0:
        raise ArgumentError(
            f"roc_auc_ovr: class {k} needs at least one positive and one negative")

    # midranks give the tie-corrected Mann-Whitney statistic directly
    order = np.argsort(s, kind="stable")
    ranks = np.empty(len(s), dtype=np.float64)
    sorted_s = s[order]
    i = 0
    while i < len(s):
        j = i
        while j + 1 < len(s) and sorted_s[j + 1] == sorted_s[i]:
            j += 1
        ranks[order[i:j + 1]] = (i + j) / 2.0 + 1.0
        i = j + 1
    rank_sum = ranks[pos].sum()
    auc = (rank_sum - n_pos * (n_pos + 1) / 2.0) / (n_pos * n_neg)

    sweep = [(float("inf"), 0.0, 0.0)]
    tp = fp = 0
    desc = np.argsort(-s, kind="stable")
    i = 0
    while i < len(s):
        thr = s[desc[i]]
        while i < len(s) and s[desc[i]] == thr:
            if pos[desc[i]]:
                tp += 1
            else:
                fp += 1
            i += 1
        sweep.append((float(thr), fp / n_neg, tp / n_pos))
    if sweep[-1][1:] != (1.0, 1.0):
        sweep.append((float("-inf"), 1.0, 1.0))
    return float(auc), sweep


def export_report(cm, class_names, out_dir, scores=None, y_true=None):
    """Write confusion.csv, metrics.csv, and (when scores are given) one
    roc_<class>.csv per class. Returns the list of written paths."""
    out = Path(out_dir)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise IOError(f"cannot create report directory {out}: {exc}")
    cm = np.asarray(cm, dtype=np.int64)
    written = []

    lines = ["actual\\predicted," + ",".join(class_names)]
    for i, name in enumerate(class_names):
        lines.append(name + "," + ",".join(str(int(v)) for v in cm[i]))
    p = out / "confusion.csv"
    p.write_text("\n".join(lines) + "\n")
    written.append(p)

    per = per_class_metrics(cm)
    agg = overall_metrics(cm)
    lines = ["class,tp,tn,fp,fn,accuracy,precision,sensitivity,specificity,f1,degenerate"]
    for name, m in zip(class_names, per):
        lines.append(
            f"{name},{m.tp},{m.tn},{m.fp},{m.fn},{m.accuracy:.9g},"
            f"{m.precision:.9g},{m.sensitivity:.9g},{m.specificity:.9g},"
            f"{m.f1:.9g},{'|'.join(m.degenerate)}")
    for key in sorted(agg):
        lines.append(f"{key},,,,,{agg[key]:.9g},,,,,")
    p = out / "metrics.csv"
    p.write_text("\n".join(lines) + "\n")
    written.append(p)

    if scores is not None and y_true is not None:
        for k, name in enumerate(class_names):
            auc, sweep = roc_auc_ovr(scores, y_true, k)
            lines = [f"# auc={auc:.9g}", "threshold,fpr,tpr"]
            for thr, fpr, tpr in sweep:
                lines.append(f"{thr:.9g},{fpr:.9g},{tpr:.9g}")
            p = out / f"roc_{name}.csv"
            p.write_text("\n".join(lines) + "\n")
            written.append(p)
    return written
