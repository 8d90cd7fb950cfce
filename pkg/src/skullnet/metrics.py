"""Multi-label evaluation: per-label scores, four averaging modes, ranking
curves, and the assembled report.

Conventions, pinned by tests:
  * precision/recall/F1/specificity return 0 when their denominator is 0;
  * the samples average scores each sample's label *sets* and treats a
    sample whose true and predicted sets are both empty as a perfect 1;
  * the Hamming score is the mean per-sample Jaccard overlap |Y∩Ŷ|/|Y∪Ŷ|
    (both-empty rows score 1), which together with the Hamming loss
    satisfies subset_accuracy <= hamming_score <= 1 - hamming_loss;
  * ROC/PR sweeps use the distinct scores in descending order as
    thresholds, predicting positive at score >= threshold; AUC is the
    trapezoidal area, average precision is sum((R_n - R_{n-1}) * P_n);
  * labels whose curve metric is undefined (single-class truth, or no
    positives for AP) are reported as None and skipped, with
    renormalisation, by the macro curve-metric averages.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ShapeError, UndefinedMetricError, ValidationError

AVERAGING_MODES = ("micro", "macro", "weighted", "samples")


@dataclass
class ConfusionCounts:
    tp: int
    fp: int
    tn: int
    fn: int


def _as_binary_matrix(y, name: str) -> np.ndarray:
    y = np.asarray(y)
    if y.ndim != 2:
        raise ShapeError(f"{name} must be 2-D (samples x labels), got shape {y.shape}")
    values = np.unique(y)
    if not np.isin(values, (0, 1)).all():
        raise ValidationError(f"{name} must be binary, found values {values}")
    return y.astype(np.int8)


def confusion(y_true, y_pred) -> ConfusionCounts:
    """2x2 counts for one label column."""
    y_true = np.asarray(y_true).reshape(-1)
    y_pred = np.asarray(y_pred).reshape(-1)
    if y_true.shape != y_pred.shape:
        raise ShapeError(f"length mismatch: {y_true.shape} vs {y_pred.shape}")
    for name, arr in (("y_true", y_true), ("y_pred", y_pred)):
        if not np.isin(np.unique(arr), (0, 1)).all():
            raise ValidationError(f"{name} must contain only 0/1 entries")
    t = y_true == 1
    p = y_pred == 1
    return ConfusionCounts(
        tp=int(np.sum(t & p)),
        fp=int(np.sum(~t & p)),
        tn=int(np.sum(~t & ~p)),
        fn=int(np.sum(t & ~p)),
    )


def _safe_div(num: float, den: float) -> float:
    return num / den if den > 0 else 0.0


def prf_specificity(c: ConfusionCounts) -> tuple[float, float, float, float]:
    """(precision, recall, f1, specificity); 0/0 cases return 0."""
    precision = _safe_div(c.tp, c.tp + c.fp)
    recall = _safe_div(c.tp, c.tp + c.fn)
    f1 = _safe_div(2.0 * precision * recall, precision + recall)
    specificity = _safe_div(c.tn, c.tn + c.fp)
    return precision, recall, f1, specificity


def averaged(y_true, y_pred, mode: str) -> tuple[float, float, float]:
    """(precision, recall, f1) under one of the four averaging modes."""
    y_true = _as_binary_matrix(y_true, "y_true")
    y_pred = _as_binary_matrix(y_pred, "y_pred")
    if y_true.shape != y_pred.shape:
        raise ShapeError(f"shape mismatch: {y_true.shape} vs {y_pred.shape}")
    if mode not in AVERAGING_MODES:
        raise ValidationError(f"mode must be one of {AVERAGING_MODES}, got {mode!r}")
    n, n_labels = y_true.shape

    if mode == "micro":
        pooled = ConfusionCounts(
            tp=int(np.sum((y_true == 1) & (y_pred == 1))),
            fp=int(np.sum((y_true == 0) & (y_pred == 1))),
            tn=int(np.sum((y_true == 0) & (y_pred == 0))),
            fn=int(np.sum((y_true == 1) & (y_pred == 0))),
        )
        p, r, f1, _ = prf_specificity(pooled)
        return p, r, f1

    if mode in ("macro", "weighted"):
        scores = np.array(
            [prf_specificity(confusion(y_true[:, j], y_pred[:, j]))[:3] for j in range(n_labels)]
        )
        if mode == "macro":
            return tuple(float(v) for v in scores.mean(axis=0))
        support = y_true.sum(axis=0).astype(np.float64)
        if support.sum() == 0:
            return 0.0, 0.0, 0.0
        weights = support / support.sum()
        return tuple(float(v) for v in (weights[:, None] * scores).sum(axis=0))

    # samples: per-row set precision/recall/F1, then mean over rows
    inter = np.sum((y_true == 1) & (y_pred == 1), axis=1).astype(np.float64)
    true_sz = y_true.sum(axis=1).astype(np.float64)
    pred_sz = y_pred.sum(axis=1).astype(np.float64)
    both_empty = (true_sz == 0) & (pred_sz == 0)
    with np.errstate(invalid="ignore", divide="ignore"):
        p_row = np.where(pred_sz > 0, inter / pred_sz, 0.0)
        r_row = np.where(true_sz > 0, inter / true_sz, 0.0)
        f_row = np.where(p_row + r_row > 0, 2.0 * p_row * r_row / (p_row + r_row), 0.0)
    p_row[both_empty] = r_row[both_empty] = f_row[both_empty] = 1.0
    return float(p_row.mean()), float(r_row.mean()), float(f_row.mean())


def subset_accuracy(y_true, y_pred) -> float:
    """Fraction of samples whose whole label row matches exactly."""
    y_true = _as_binary_matrix(y_true, "y_true")
    y_pred = _as_binary_matrix(y_pred, "y_pred")
    if y_true.shape != y_pred.shape:
        raise ShapeError(f"shape mismatch: {y_true.shape} vs {y_pred.shape}")
    if y_true.shape[0] == 0:
        raise ValidationError("subset_accuracy needs at least one sample")
    return float(np.mean(np.all(y_true == y_pred, axis=1)))


def hamming_loss(y_true, y_pred) -> float:
    """Fraction of individual label bits predicted incorrectly."""
    y_true = _as_binary_matrix(y_true, "y_true")
    y_pred = _as_binary_matrix(y_pred, "y_pred")
    if y_true.shape != y_pred.shape:
        raise ShapeError(f"shape mismatch: {y_true.shape} vs {y_pred.shape}")
    if y_true.shape[0] == 0:
        raise ValidationError("hamming_loss needs at least one sample")
    return float(np.mean(y_true != y_pred))


def hamming_score(y_true, y_pred) -> float:
    """Mean per-sample Jaccard overlap of true and predicted label sets."""
    y_true = _as_binary_matrix(y_true, "y_true")
    y_pred = _as_binary_matrix(y_pred, "y_pred")
    if y_true.shape != y_pred.shape:
        raise ShapeError(f"shape mismatch: {y_true.shape} vs {y_pred.shape}")
    if y_true.shape[0] == 0:
        raise ValidationError("hamming_score needs at least one sample")
    inter = np.sum((y_true == 1) & (y_pred == 1), axis=1).astype(np.float64)
    union = np.sum((y_true == 1) | (y_pred == 1), axis=1).astype(np.float64)
    scores = np.where(union > 0, inter / np.maximum(union, 1.0), 1.0)
    return float(scores.mean())


def _ranking_input(scores, y) -> tuple[np.ndarray, np.ndarray]:
    scores = np.asarray(scores, dtype=np.float64).reshape(-1)
    y = np.asarray(y).reshape(-1)
    if scores.shape != y.shape:
        raise ShapeError(f"scores {scores.shape} vs labels {y.shape}")
    if not np.isin(np.unique(y), (0, 1)).all():
        raise ValidationError("labels must be binary")
    return scores, y.astype(np.int8)


def roc_auc(scores, y) -> tuple[np.ndarray, float]:
    """ROC sweep and trapezoidal AUC.

    Returns (points, auc) where points rows are (threshold, fpr, tpr),
    anchored at (inf, 0, 0); consecutive duplicate (fpr, tpr) points are
    dropped. Requires both classes present.
    """
    scores, y = _ranking_input(scores, y)
    n_pos = int(y.sum())
    n_neg = y.size - n_pos
    if n_pos == 0 or n_neg == 0:
        raise UndefinedMetricError("ROC AUC is undefined when y has a single class")

    order = np.argsort(-scores, kind="stable")
    sorted_scores = scores[order]
    sorted_y = y[order]
    # cumulative counts at each threshold = last index of each tied block
    cum_tp = np.cumsum(sorted_y)
    distinct = np.flatnonzero(np.diff(sorted_scores, append=np.nan))
    tp = cum_tp[distinct]
    fp = (distinct + 1) - tp
    tpr = tp / n_pos
    fpr = fp / n_neg
    thresholds = sorted_scores[distinct]

    pts = [(np.inf, 0.0, 0.0)]
    for t, x, yy in zip(thresholds, fpr, tpr):
        if (x, yy) != (pts[-1][1], pts[-1][2]):
            pts.append((float(t), float(x), float(yy)))
    points = np.array(pts, dtype=np.float64)
    x, t = points[:, 1], points[:, 2]
    auc = float(np.sum(np.diff(x) * (t[1:] + t[:-1]) / 2.0))
    return points, auc


def pr_average_precision(scores, y) -> tuple[np.ndarray, float]:
    """Precision-recall sweep and average precision.

    Returns (points, ap) with points rows (threshold, recall, precision)
    over distinct descending thresholds, and ap the recall-increment
    weighted sum of precisions. Requires at least one positive.
    """
    scores, y = _ranking_input(scores, y)
    n_pos = int(y.sum())
    if n_pos == 0:
        raise UndefinedMetricError("average precision is undefined without positives")

    order = np.argsort(-scores, kind="stable")
    sorted_scores = scores[order]
    sorted_y = y[order]
    cum_tp = np.cumsum(sorted_y)
    distinct = np.flatnonzero(np.diff(sorted_scores, append=np.nan))
    tp = cum_tp[distinct]
    predicted = distinct + 1.0
    precision = tp / predicted
    recall = tp / n_pos
    thresholds = sorted_scores[distinct]

    prev_r = 0.0
    ap = 0.0
    for r, p in zip(recall, precision):
        ap += (r - prev_r) * p
        prev_r = r
    points = np.column_stack([thresholds, recall, precision])
    return points, float(ap)


@dataclass
class LabelReport:
    counts: ConfusionCounts
    precision: float
    recall: float
    f1: float
    specificity: float
    roc_auc: float | None
    average_precision: float | None
    roc_points: np.ndarray | None
    pr_points: np.ndarray | None


@dataclass
class MetricsReport:
    label_names: list[str]
    per_label: list[LabelReport]
    averages: dict[str, tuple[float, float, float]]  # mode -> (p, r, f1)
    subset_accuracy: float
    hamming_score: float
    hamming_loss: float
    roc_auc_macro: float | None
    average_precision_macro: float | None


def full_report(y_true, y_pred, confidences, label_names=None) -> MetricsReport:
    """Assemble every per-label and averaged quantity plus the curves.

    Per-label curve metrics that are undefined (single-class column, no
    positives) are recorded as None; the macro curve averages renormalise
    over the defined labels and are None if no label defines them.
    """
    y_true = _as_binary_matrix(y_true, "y_true")
    y_pred = _as_binary_matrix(y_pred, "y_pred")
    confidences = np.asarray(confidences, dtype=np.float64)
    if y_true.shape != y_pred.shape or confidences.shape != y_true.shape:
        raise ShapeError(
            f"shape mismatch: y_true {y_true.shape}, y_pred {y_pred.shape}, "
            f"confidences {confidences.shape}"
        )
    n, n_labels = y_true.shape
    if label_names is None:
        label_names = [f"label{j}" for j in range(n_labels)]
    if len(label_names) != n_labels:
        raise ValidationError(f"{len(label_names)} names for {n_labels} labels")

    per_label = []
    for j in range(n_labels):
        c = confusion(y_true[:, j], y_pred[:, j])
        p, r, f1, spec = prf_specificity(c)
        try:
            roc_points, auc = roc_auc(confidences[:, j], y_true[:, j])
        except UndefinedMetricError:
            roc_points, auc = None, None
        try:
            pr_points, ap = pr_average_precision(confidences[:, j], y_true[:, j])
        except UndefinedMetricError:
            pr_points, ap = None, None
        per_label.append(
            LabelReport(
                counts=c,
                precision=p,
                recall=r,
                f1=f1,
                specificity=spec,
                roc_auc=auc,
                average_precision=ap,
                roc_points=roc_points,
                pr_points=pr_points,
            )
        )

    aucs = [lr.roc_auc for lr in per_label if lr.roc_auc is not None]
    aps = [lr.average_precision for lr in per_label if lr.average_precision is not None]
    return MetricsReport(
        label_names=list(label_names),
        per_label=per_label,
        averages={mode: averaged(y_true, y_pred, mode) for mode in AVERAGING_MODES},
        subset_accuracy=subset_accuracy(y_true, y_pred),
        hamming_score=hamming_score(y_true, y_pred),
        hamming_loss=hamming_loss(y_true, y_pred),
        roc_auc_macro=float(np.mean(aucs)) if aucs else None,
        average_precision_macro=float(np.mean(aps)) if aps else None,
    )


def _fmt(value) -> str:
    return "undefined" if value is None else f"{value:.6f}"


def report_text(report: MetricsReport) -> str:
    """Flat key=value block: overall scalars, averaged rows, per-label rows."""
    lines = [
        f"subset_accuracy={_fmt(report.subset_accuracy)}",
        f"hamming_score={_fmt(report.hamming_score)}",
        f"hamming_loss={_fmt(report.hamming_loss)}",
        f"roc_auc_macro={_fmt(report.roc_auc_macro)}",
        f"average_precision_macro={_fmt(report.average_precision_macro)}",
    ]
    for mode in AVERAGING_MODES:
        p, r, f1 = report.averages[mode]
        lines.append(f"{mode}_precision={_fmt(p)}")
        lines.append(f"{mode}_recall={_fmt(r)}")
        lines.append(f"{mode}_f1={_fmt(f1)}")
    for name, lr in zip(report.label_names, report.per_label):
        lines.append(f"{name}_precision={_fmt(lr.precision)}")
        lines.append(f"{name}_recall={_fmt(lr.recall)}")
        lines.append(f"{name}_f1={_fmt(lr.f1)}")
        lines.append(f"{name}_specificity={_fmt(lr.specificity)}")
        lines.append(f"{name}_roc_auc={_fmt(lr.roc_auc)}")
        lines.append(f"{name}_average_precision={_fmt(lr.average_precision)}")
        lines.append(f"{name}_tp={lr.counts.tp}")
        lines.append(f"{name}_fp={lr.counts.fp}")
        lines.append(f"{name}_tn={lr.counts.tn}")
        lines.append(f"{name}_fn={lr.counts.fn}")
    return "\n".join(lines) + "\n"


def curves_csv(report: MetricsReport, kind: str) -> str:
    """Curve points as CSV text with header label,threshold,x,y.

    kind='roc' emits (fpr, tpr) per point; kind='pr' emits
    (recall, precision). Labels with undefined curves are omitted.
    """
    if kind not in ("roc", "pr"):
        raise ValidationError(f"kind must be 'roc' or 'pr', got {kind!r}")
    lines = ["label,threshold,x,y"]
    for name, lr in zip(report.label_names, report.per_label):
        points = lr.roc_points if kind == "roc" else lr.pr_points
        if points is None:
            continue
        for t, x, y in points:
            lines.append(f"{name},{float(t)!r},{float(x)!r},{float(y)!r}")
    return "\n".join(lines) + "\n"
