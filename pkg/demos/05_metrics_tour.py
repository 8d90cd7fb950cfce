"""Every evaluation quantity on one small hand-checkable example.

Five samples, three labels; the predictions hit one exact match, two
partial overlaps, one miss, and one perfect empty row, so all the
averaging modes and the Hamming pair land on distinct values."""

import numpy as np

from skullnet import metrics

y_true = np.array([
    [1, 0, 1],
    [1, 1, 0],
    [0, 0, 1],
    [0, 0, 0],
    [1, 0, 0],
], dtype=np.int8)
y_pred = np.array([
    [1, 0, 1],   # exact
    [1, 0, 0],   # one bit short
    [0, 1, 1],   # one bit extra
    [0, 0, 0],   # exact (both empty)
    [0, 0, 1],   # miss
], dtype=np.int8)
confidence = np.array([
    [0.9, 0.2, 0.8],
    [0.7, 0.4, 0.3],
    [0.1, 0.6, 0.9],
    [0.2, 0.1, 0.3],
    [0.4, 0.2, 0.6],
])

print("subset accuracy :", metrics.subset_accuracy(y_true, y_pred))
print("hamming score   :", round(metrics.hamming_score(y_true, y_pred), 4))
print("hamming loss    :", round(metrics.hamming_loss(y_true, y_pred), 4))
for mode in metrics.AVERAGING_MODES:
    p, r, f1 = metrics.averaged(y_true, y_pred, mode)
    print(f"{mode:9s} avg   : P={p:.3f} R={r:.3f} F1={f1:.3f}")

points, auc = metrics.roc_auc(confidence[:, 0], y_true[:, 0])
print(f"\nlabel 0 ROC AUC {auc:.3f}; sweep points (threshold, fpr, tpr):")
print(np.round(points, 3))
points, ap = metrics.pr_average_precision(confidence[:, 0], y_true[:, 0])
print(f"label 0 average precision {ap:.3f}")

report = metrics.full_report(y_true, y_pred, confidence, ["alpha", "beta", "gamma"])
print("\nfull report, key=value block:\n")
print(metrics.report_text(report))
