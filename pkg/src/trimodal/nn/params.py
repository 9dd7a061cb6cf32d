import numpy as np


class LayerParams:
    """Named parameter tensors for one layer, with gradient slots for the trainable ones."""

    def __init__(self, name, tensors=None, trainable=None):
        self.name = name
        self.tensors = {k: np.asarray(v, dtype=np.float64) for k, v in (tensors or {}).items()}
        if trainable is None:
            trainable = set(self.tensors)
        self.trainable = set(trainable)
        self.grads = {}

    def __getitem__(self, role):
        return self.tensors[role]

    def __setitem__(self, role, value):
        self.tensors[role] = np.asarray(value, dtype=np.float64)

    def __contains__(self, role):
        return role in self.tensors

    def is_trainable(self, role):
        return role in self.trainable

    def zero_grad(self):
        self.grads = {k: np.zeros_like(self.tensors[k]) for k in self.trainable}

    def count(self, trainable_only=True):
        return sum(v.size for k, v in self.tensors.items() if not trainable_only or k in self.trainable)

    def copy(self):
        p = LayerParams(self.name, {k: v.copy() for k, v in self.tensors.items()}, self.trainable)
        return p

    def __repr__(self):
        shapes = ", ".join(f"{k}{list(v.shape)}" for k, v in self.tensors.items())
        return f"LayerParams({self.name!r}: {shapes})"
