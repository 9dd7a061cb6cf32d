"""
Threshold metrics and ROC curves
================================

Scores become labels at a threshold (score >= threshold is positive). The
ROC curve groups tied scores into one step, so its trapezoidal area equals
the probability that a random positive outscores a random negative.
"""

# %%
from trimodal.metrics import (
    auc_score, build_report, classification_metrics, confusion_at_threshold, roc_points,
)

scores = [0.95, 0.80, 0.80, 0.62, 0.55, 0.40, 0.33, 0.20, 0.10, 0.05]
labels = [1, 1, 0, 1, 0, 1, 0, 0, 1, 0]

cm = confusion_at_threshold(scores, labels, 0.5)
print(cm)
print(classification_metrics(cm))

# %%
# The curve and its area
# ----------------------
for fpr, tpr in roc_points(scores, labels):
    print(f"  fpr={fpr:.2f}  tpr={tpr:.2f}")
print("AUC:", auc_score(scores, labels))

pairs = [(p, n) for p, y in zip(scores, labels) if y for n, z in zip(scores, labels) if not z]
print("pairwise check:", sum(1.0 if p > n else 0.5 if p == n else 0.0 for p, n in pairs) / len(pairs))

# %%
# A report table
# --------------
report = build_report({"Model A": (scores, labels), "Model B": ([1 - s for s in scores], labels)},
                      dataset="demo", seed=0)
print(report.to_text())
