"""
Late fusion with missing modalities
===================================

Fusion works on per-modality probability vectors. A modality can be
missing for a subject; each strategy then uses what is present and reports
a confidence below one.
"""

# %%
import numpy as np

from trimodal import fusion as fz

weights = fz.derive_weights({"image": 0.92, "cognitive": 0.89, "biomarker": 0.88})
print(weights)

subject = [
    fz.ModalityPrediction.positive("image", 0.81),
    fz.ModalityPrediction.positive("cognitive", 0.35),
    fz.ModalityPrediction.positive("biomarker", 0.66),
]

# %%
# All modalities present
# ----------------------
stacker = fz.StackerModel(np.array([2.0, 1.5, 1.5]), -2.5, trained=True)
for strategy in fz.STRATEGIES:
    res = fz.fuse(strategy, subject, weights, prior=0.5, stacker=stacker)
    print(f"{res.strategy:40s} p(AD)={res.positive:.3f} label={res.label} confidence={res.confidence:.3f}")

# %%
# The image is unavailable
# ------------------------
no_image = [fz.ModalityPrediction.missing("image")] + subject[1:]
for strategy in fz.STRATEGIES:
    res = fz.fuse(strategy, no_image, weights, prior=0.5, stacker=stacker)
    print(f"{res.strategy:40s} p(AD)={res.positive:.3f} label={res.label} confidence={res.confidence:.3f}")

# %%
# A learned stacker
# -----------------
# Meta-features are the positive-class probabilities; NaN marks a missing
# modality and is imputed with 0.5.
rng = np.random.default_rng(0)
labels = rng.integers(0, 2, 200)
meta = np.clip(labels[:, None] * 0.4 + 0.3 + rng.normal(0, 0.15, (200, 3)), 0.01, 0.99)
meta[rng.random((200, 3)) < 0.1] = np.nan
model = fz.train_stacker(meta, labels)
print("stacker weights", np.round(model.weights, 3), "bias", round(model.bias, 3),
      "after", model.iterations, "iterations")
