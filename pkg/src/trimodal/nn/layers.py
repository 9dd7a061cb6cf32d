"""Layer objects: forward caches what backward needs; parameters live in LayerParams."""

import math

import numpy as np

from ..errors import StateError
from . import functional as F
from .params import LayerParams


def he_uniform(rng, shape, fan_in):
    limit = math.sqrt(6.0 / fan_in)
    return rng.uniform(-limit, limit, size=shape)


class Layer:
    kind = "layer"
    params = None

    def __init__(self):
        self._cache = None

    def forward(self, x, mode, rng):
        raise NotImplementedError

    def backward(self, dy):
        raise NotImplementedError

    def describe(self):
        return {"kind": self.kind}

    def _take_cache(self):
        if self._cache is None:
            raise StateError(f"{self.kind}: backward called before forward")
        return self._cache


class Dense(Layer):
    kind = "dense"

    def __init__(self, in_dim, out_dim, name="dense", rng=None):
        super().__init__()
        self.in_dim, self.out_dim = in_dim, out_dim
        W = he_uniform(rng, (out_dim, in_dim), in_dim) if rng is not None else np.zeros((out_dim, in_dim))
        self.params = LayerParams(name, {"weight": W, "bias": np.zeros(out_dim)})

    def forward(self, x, mode, rng):
        self._cache = x
        return F.dense_fwd(x, self.params["weight"], self.params["bias"])

    def backward(self, dy):
        x = self._take_cache()
        dx, dW, db = F.dense_bwd(dy, x, self.params["weight"])
        self.params.grads = {"weight": dW, "bias": db}
        return F.check_finite(dx, "dense backward")

    def describe(self):
        return {"kind": self.kind, "units": self.out_dim}


class Conv2D(Layer):
    kind = "conv2d"

    def __init__(self, c_in, c_out, kernel=3, name="conv", rng=None):
        super().__init__()
        self.c_in, self.c_out, self.kernel = c_in, c_out, kernel
        shape = (c_out, kernel, kernel, c_in)
        K = he_uniform(rng, shape, kernel * kernel * c_in) if rng is not None else np.zeros(shape)
        self.params = LayerParams(name, {"weight": K, "bias": np.zeros(c_out)})

    def forward(self, x, mode, rng):
        y, cols = F.conv2d_same_fwd(x, self.params["weight"], self.params["bias"])
        self._cache = (cols, x.shape)
        return y

    def backward(self, dy):
        cols, x_shape = self._take_cache()
        dx, dK, db = F.conv2d_same_bwd(dy, cols, x_shape, self.params["weight"])
        self.params.grads = {"weight": dK, "bias": db}
        return F.check_finite(dx, "conv2d backward")

    def describe(self):
        return {"kind": self.kind, "filters": self.c_out, "kernel": self.kernel, "padding": "same"}


class ReLU(Layer):
    kind = "relu"

    def forward(self, x, mode, rng):
        self._cache = x > 0
        return np.where(self._cache, x, 0.0)

    def backward(self, dy):
        return dy * self._take_cache()


class BatchNorm(Layer):
    kind = "batchnorm"

    def __init__(self, channels, name="bn"):
        super().__init__()
        self.channels = channels
        self.params = LayerParams(
            name,
            {
                "gamma": np.ones(channels),
                "beta": np.zeros(channels),
                "running_mean": np.zeros(channels),
                "running_var": np.ones(channels),
            },
            trainable={"gamma", "beta"},
        )

    def forward(self, x, mode, rng):
        y, self._cache = F.batchnorm_fwd(x, self.params, mode)
        return y

    def backward(self, dy):
        dx, dgamma, dbeta = F.batchnorm_bwd(dy, self._take_cache(), self.params["gamma"])
        self.params.grads = {"gamma": dgamma, "beta": dbeta}
        return F.check_finite(dx, "batchnorm backward")


class MaxPool2x2(Layer):
    kind = "maxpool"

    def forward(self, x, mode, rng):
        y, arg = F.maxpool2x2_fwd(x)
        self._cache = (arg, x.shape)
        return y

    def backward(self, dy):
        arg, shape = self._take_cache()
        return F.maxpool2x2_bwd(dy, arg, shape)

    def describe(self):
        return {"kind": self.kind, "pool": 2}


class Flatten(Layer):
    kind = "flatten"

    def forward(self, x, mode, rng):
        self._cache = x.shape
        return x.reshape(x.shape[0], -1)

    def backward(self, dy):
        return dy.reshape(self._take_cache())


class Dropout(Layer):
    kind = "dropout"

    def __init__(self, rate):
        super().__init__()
        self.rate = rate

    def forward(self, x, mode, rng):
        mask = F.dropout_mask(x.shape, self.rate, rng) if mode == "train" else None
        self._cache = (mask,)
        return x if mask is None else x * mask

    def backward(self, dy):
        (mask,) = self._take_cache()
        return dy if mask is None else dy * mask

    def describe(self):
        return {"kind": self.kind, "rate": self.rate}


class Softmax(Layer):
    """Output activation. Training stops at the logits and uses the fused cross-entropy."""

    kind = "softmax"

    def forward(self, x, mode, rng):
        return F.softmax(x)

    def backward(self, dy):
        raise StateError("softmax output is not differentiated directly; use softmax_cross_entropy on logits")


class LSTM(Layer):
    kind = "lstm"

    def __init__(self, in_dim, units, return_sequences=False, recurrent_dropout=0.0, name="lstm", rng=None):
        super().__init__()
        self.in_dim, self.units = in_dim, units
        self.return_sequences = return_sequences
        self.recurrent_dropout = recurrent_dropout
        tensors = {}
        for g in F.GATES:
            if rng is not None:
                tensors["W_" + g] = he_uniform(rng, (units, in_dim), in_dim)
                lim = 1.0 / math.sqrt(units)
                tensors["U_" + g] = rng.uniform(-lim, lim, size=(units, units))
            else:
                tensors["W_" + g] = np.zeros((units, in_dim))
                tensors["U_" + g] = np.zeros((units, units))
            tensors["b_" + g] = np.full(units, 1.0 if (g == "f" and rng is not None) else 0.0)
        self.params = LayerParams(name, tensors)

    def forward(self, x, mode, rng):
        out, self._cache = F.lstm_layer_fwd(
            x, self.params, self.return_sequences, self.recurrent_dropout, mode, rng
        )
        return out

    def backward(self, dy):
        dx, dW, dU, db = F.lstm_layer_bwd(dy, self._take_cache())
        u = self.units
        grads = {}
        for k, g in enumerate(F.GATES):
            sl = slice(k * u, (k + 1) * u)
            grads["W_" + g] = dW[sl]
            grads["U_" + g] = dU[sl]
            grads["b_" + g] = db[sl]
        self.params.grads = grads
        return F.check_finite(dx, "lstm backward")

    def describe(self):
        return {
            "kind": self.kind,
            "units": self.units,
            "return_sequences": self.return_sequences,
            "recurrent_dropout": self.recurrent_dropout,
        }


class Sequential:
    """Ordered stack of layers. ``forward`` returns logits (a trailing Softmax is skipped)."""

    def __init__(self, layers):
        self.layers = list(layers)

    def _body(self):
        if self.layers and isinstance(self.layers[-1], Softmax):
            return self.layers[:-1]
        return self.layers

    def forward(self, x, mode="infer", rng=None):
        for layer in self._body():
            x = layer.forward(x, mode, rng)
        return x

    def predict_proba(self, x):
        return F.softmax(self.forward(x, "infer", None))

    def backward(self, dlogits):
        """Reverse-mode pass from a logits gradient; fills every trainable gradient slot."""
        d = dlogits
        for layer in reversed(self._body()):
            d = layer.backward(d)
        return d

    def param_layers(self):
        return [layer.params for layer in self.layers if layer.params is not None]

    def parameters(self):
        """Trainable tensors keyed ``layer.role``."""
        return {
            f"{p.name}.{k}": p.tensors[k] for p in self.param_layers() for k in p.tensors if k in p.trainable
        }

    def gradients(self):
        out = {}
        for p in self.param_layers():
            for k in p.tensors:
                if k in p.trainable:
                    if k not in p.grads:
                        raise StateError(f"no gradient for {p.name}.{k}; run backward first")
                    out[f"{p.name}.{k}"] = p.grads[k]
        return out

    def state_dict(self):
        """All tensors, trainable or not, keyed ``layer.role``."""
        return {f"{p.name}.{k}": v for p in self.param_layers() for k, v in p.tensors.items()}

    def load_state_dict(self, state):
        for p in self.param_layers():
            for k in p.tensors:
                key = f"{p.name}.{k}"
                v = np.asarray(state[key], dtype=np.float64)
                if v.shape != p.tensors[k].shape:
                    raise ValueError(f"{key}: shape {list(v.shape)} != {list(p.tensors[k].shape)}")
                p.tensors[k] = v.copy()

    def describe(self):
        return [layer.describe() for layer in self.layers]

    def count_params(self):
        return sum(p.count() for p in self.param_layers())


def backprop(model, logits_grad):
    """Exact reverse-mode gradients for every trainable tensor of ``model``.

    Returns the gradient dict keyed like ``model.parameters()``.
    """
    model.backward(logits_grad)
    return model.gradients()
