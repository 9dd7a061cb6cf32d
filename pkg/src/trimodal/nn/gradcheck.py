import numpy as np

from ..rng import Rng
from .functional import softmax_cross_entropy_grad


def relative_error(a, n):
    return abs(a - n) / max(abs(a), abs(n), 1e-8)


def gradient_check(loss_fn, params, grads, eps=1e-5, samples=5, seed=0):
    """Max relative error between analytic grads and central differences.

    ``params`` maps names to arrays that ``loss_fn`` reads; entries are perturbed
    in place and restored. ``samples`` entries per tensor are drawn with a seeded
    stream (all entries when the tensor is smaller); ``samples=None`` checks all.
    """
    rng = Rng(seed)
    worst = 0.0
    for name, p in params.items():
        g = np.asarray(grads[name])
        flat = p.reshape(-1)  # view: perturbations reach the live tensor
        if samples is None or flat.size <= samples:
            idx = np.arange(flat.size)
        else:
            idx = rng.permutation(flat.size)[:samples]
        for k in idx:
            old = flat[k]
            flat[k] = old + eps
            fp = loss_fn()
            flat[k] = old - eps
            fm = loss_fn()
            flat[k] = old
            num = (fp - fm) / (2 * eps)
            worst = max(worst, relative_error(float(g.reshape(-1)[k]), num))
    return worst


def model_gradient_check(model, x, labels, eps=1e-5, samples=5, seed=0, check_input=False):
    """Gradient-check a Sequential in train mode with dropout masks frozen by reseeding."""

    def run():
        logits = model.forward(x, "train", Rng(seed))
        return softmax_cross_entropy_grad(logits, labels)

    _, dlogits = run()
    dx = model.backward(dlogits)
    grads = {k: v.copy() for k, v in model.gradients().items()}
    params = model.parameters()
    if check_input:
        params["input"] = x
        grads["input"] = dx
    return gradient_check(lambda: run()[0], params, grads, eps=eps, samples=samples, seed=seed)
