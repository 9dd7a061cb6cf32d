"""
Training the per-modality models
================================

Three branch models share one training loop: a CNN for images and two
stacked LSTMs for the cognitive and biomarker sequences. Here the cognitive
branch is trained on a small synthetic cohort and evaluated on held-out data.
"""

# %%
# Data
# ----
from trimodal.dataio import Geometry, fit_apply_normalization, generate_trimodal, split_dataset
from trimodal.metrics import auc_score
from trimodal.modalities import (
    TrainConfig, build_cognitive_lstm, build_mri_cnn, predict_batch, train_modality,
)

geometry = Geometry(16, 16, 6, 3, 4, 3)
cohort = generate_trimodal(seed=3, n_subjects=300, geometry=geometry)
train, val, test = split_dataset(cohort, seed=3)
stats, train, val, test = fit_apply_normalization(train, val, test)
print(f"train/val/test = {len(train)}/{len(val)}/{len(test)}")

# %%
# Architectures
# -------------
# The image branch follows the same block layout at any side divisible by 8.
cnn = build_mri_cnn(side=16, seed=1)
print("image CNN parameters:", cnn.count_params())
lstm = build_cognitive_lstm(T=6, feature_dim=3, seed=2)
print("cognitive LSTM parameters:", lstm.count_params())

# %%
# Training with early stopping
# ----------------------------
_, Xt, yt = train.arrays("cognitive")
_, Xv, yv = val.arrays("cognitive")
lstm, history = train_modality(lstm, Xt, yt, Xv, yv, TrainConfig(epochs=15, seed=2), log=print)
print(f"best epoch {history.best_epoch}, {history.steps} optimizer steps")

# %%
# Held-out performance
# --------------------
_, Xs, ys = test.arrays("cognitive")
p = predict_batch(lstm, Xs)[:, 1]
print(f"test accuracy {((p >= 0.5) == ys).mean():.3f}, AUC {auc_score(p, ys):.3f}")
