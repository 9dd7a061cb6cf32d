"""
Layers and gradient checking
============================

Every layer in ``trimodal.nn`` carries its own forward and backward pass.
This demo builds a tiny network, runs one forward and backward pass, and
compares the analytic gradients with central differences.
"""

# %%
# A tiny convolutional model
# --------------------------
import numpy as np

from trimodal import nn
from trimodal.rng import Rng

rng = Rng(0)
model = nn.Sequential([
    nn.Conv2D(1, 4, 3, "conv", rng),
    nn.ReLU(),
    nn.BatchNorm(4, "bn"),
    nn.MaxPool2x2(),
    nn.Flatten(),
    nn.Dense(4 * 4 * 4, 2, "out", rng),
    nn.Softmax(),
])
for row in model.describe():
    print(row)
print("trainable parameters:", model.count_params())

# %%
# Forward, loss and backward
# --------------------------
# ``forward`` returns logits; the trailing softmax is folded into the loss.
x = rng.normal(size=(3, 8, 8, 1))
labels = np.array([0, 1, 1])
logits = model.forward(x, "train", Rng(1))
loss, dlogits = nn.softmax_cross_entropy_grad(logits, labels)
model.backward(dlogits)
print(f"loss = {loss:.4f}")
for name, g in model.gradients().items():
    print(f"  {name:12s} |grad| = {np.abs(g).max():.3e}")

# %%
# Central differences
# -------------------
# Every entry of every tensor, plus the input, is perturbed by +/- 1e-5.
err = nn.model_gradient_check(model, x, labels, eps=1e-5, samples=None, check_input=True)
print(f"max relative error: {err:.2e}")

# %%
# One Adam step moves every trainable tensor.
before = {k: v.copy() for k, v in model.parameters().items()}
state = nn.AdamState(lr=1e-2)
nn.adam_step(model.parameters(), model.gradients(), state)
moved = {k: float(np.abs(v - before[k]).max()) for k, v in model.parameters().items()}
print("largest update per tensor:", {k: round(v, 4) for k, v in moved.items()})
