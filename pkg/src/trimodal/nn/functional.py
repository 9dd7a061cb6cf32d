"""Forward and backward kernels for the layer inventory.

Every public forward op here matches one engine operation; the ``*_fwd`` and
``*_bwd`` helpers return / consume the caches the layer classes keep for
reverse mode. All tensors are float64 numpy arrays, activations channel-last.
"""

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from ..errors import DataError, DimensionError, NonFiniteError, ParameterError

BN_MOMENTUM = 0.9
BN_EPS = 1e-5


def check_finite(x, where):
    if not np.all(np.isfinite(x)):
        raise NonFiniteError(f"non-finite values produced by {where}")
    return x


def _as_f64(x):
    return np.asarray(x, dtype=np.float64)


# ---------------------------------------------------------------- dense

def dense_fwd(x, W, b):
    x = _as_f64(x)
    if x.ndim != 2 or W.ndim != 2 or x.shape[1] != W.shape[1] or b.shape != (W.shape[0],):
        raise DimensionError(
            f"dense: input {list(x.shape)} incompatible with weight {list(W.shape)} / bias {list(b.shape)}"
        )
    return check_finite(x @ W.T + b, "dense_forward")


def dense_bwd(dy, x, W):
    dx = dy @ W
    dW = dy.T @ x
    db = dy.sum(axis=0)
    return dx, dW, db


def dense_forward(x, params):
    """y[b, o] = sum_i W[o, i] x[b, i] + bias[o]."""
    return dense_fwd(x, params["weight"], params["bias"])


# ---------------------------------------------------------------- conv

def conv2d_same_fwd(x, K, b):
    x = _as_f64(x)
    if x.ndim != 4 or K.ndim != 4:
        raise DimensionError(f"conv2d: input {list(x.shape)} / kernel {list(K.shape)} must both be rank 4")
    B, H, W, C = x.shape
    c_out, kh, kw, c_in = K.shape
    if c_in != C:
        raise DimensionError(f"conv2d: input has {C} channels, kernel {list(K.shape)} expects {c_in}")
    if kh != kw or kh % 2 == 0:
        raise DimensionError(f"conv2d: kernel must be square and odd, got {list(K.shape)}")
    if b.shape != (c_out,):
        raise DimensionError(f"conv2d: bias {list(b.shape)} does not match {c_out} filters")
    p = kh // 2
    xp = np.pad(x, ((0, 0), (p, p), (p, p), (0, 0))) if p else x
    # windows: [B, H, W, C, kh, kw] -> [B, H, W, kh, kw, C] to match kernel layout
    win = sliding_window_view(xp, (kh, kw), axis=(1, 2))
    cols = np.ascontiguousarray(win.transpose(0, 1, 2, 4, 5, 3)).reshape(B * H * W, kh * kw * C)
    y = cols @ K.reshape(c_out, -1).T + b
    return check_finite(y.reshape(B, H, W, c_out), "conv2d_same_forward"), cols


def conv2d_same_bwd(dy, cols, x_shape, K):
    B, H, W, C = x_shape
    c_out, kh, kw, _ = K.shape
    p = kh // 2
    dy2 = dy.reshape(-1, c_out)
    dK = (dy2.T @ cols).reshape(K.shape)
    db = dy2.sum(axis=0)
    dcols = (dy2 @ K.reshape(c_out, -1)).reshape(B, H, W, kh, kw, C)
    dxp = np.zeros((B, H + 2 * p, W + 2 * p, C))
    for i in range(kh):
        for j in range(kw):
            dxp[:, i:i + H, j:j + W, :] += dcols[:, :, :, i, j, :]
    dx = dxp[:, p:p + H, p:p + W, :] if p else dxp
    return dx, dK, db


def conv2d_same_forward(x, params):
    """Stride-1 cross-correlation with zero 'same' padding plus per-filter bias."""
    return conv2d_same_fwd(x, params["weight"], params["bias"])[0]


# ---------------------------------------------------------------- pooling

def maxpool2x2_fwd(x):
    x = _as_f64(x)
    if x.ndim != 4:
        raise DimensionError(f"maxpool2x2: expected [batch, h, w, c], got {list(x.shape)}")
    B, H, W, C = x.shape
    if H % 2 or W % 2:
        raise DimensionError(f"maxpool2x2: spatial dims must be even, got {H}x{W}")
    win = x.reshape(B, H // 2, 2, W // 2, 2, C).transpose(0, 1, 3, 5, 2, 4).reshape(B, H // 2, W // 2, C, 4)
    arg = win.argmax(axis=-1)  # first max in row-major window order
    y = np.take_along_axis(win, arg[..., None], axis=-1)[..., 0]
    return y, arg


def maxpool2x2_bwd(dy, arg, x_shape):
    B, H, W, C = x_shape
    dwin = np.zeros((B, H // 2, W // 2, C, 4))
    np.put_along_axis(dwin, arg[..., None], dy[..., None], axis=-1)
    return dwin.reshape(B, H // 2, W // 2, C, 2, 2).transpose(0, 1, 4, 2, 5, 3).reshape(B, H, W, C)


def maxpool2x2(x):
    return maxpool2x2_fwd(x)[0]


# ---------------------------------------------------------------- batch norm

def batchnorm_fwd(x, params, mode):
    x = _as_f64(x)
    c = x.shape[-1]
    gamma, beta = params["gamma"], params["beta"]
    if gamma.shape != (c,):
        raise DimensionError(f"batchnorm: {c} channels but gamma has shape {list(gamma.shape)}")
    axes = tuple(range(x.ndim - 1))
    if mode == "train":
        if x.shape[0] < 2:
            raise DataError("batchnorm in train mode needs a batch of at least 2")
        mean = x.mean(axis=axes)
        var = x.var(axis=axes)
        params["running_mean"] = BN_MOMENTUM * params["running_mean"] + (1 - BN_MOMENTUM) * mean
        params["running_var"] = BN_MOMENTUM * params["running_var"] + (1 - BN_MOMENTUM) * var
    elif mode == "infer":
        mean, var = params["running_mean"], params["running_var"]
    else:
        raise ParameterError(f"unknown mode {mode!r}")
    inv_std = 1.0 / np.sqrt(var + BN_EPS)
    xhat = (x - mean) * inv_std
    y = gamma * xhat + beta
    return check_finite(y, "batchnorm_forward"), (xhat, inv_std, mode)


def batchnorm_bwd(dy, cache, gamma):
    xhat, inv_std, mode = cache
    axes = tuple(range(dy.ndim - 1))
    dgamma = (dy * xhat).sum(axis=axes)
    dbeta = dy.sum(axis=axes)
    dxhat = dy * gamma
    if mode == "infer":
        return dxhat * inv_std, dgamma, dbeta
    n = dy.size // dy.shape[-1]
    dx = (inv_std / n) * (n * dxhat - dxhat.sum(axis=axes) - xhat * (dxhat * xhat).sum(axis=axes))
    return dx, dgamma, dbeta


def batchnorm_forward(x, params, mode):
    return batchnorm_fwd(x, params, mode)[0]


# ---------------------------------------------------------------- activations

def softmax(x):
    x = _as_f64(x)
    z = x - x.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def apply_activation(kind, x):
    if kind == "relu":
        return np.maximum(_as_f64(x), 0.0)
    if kind == "softmax":
        return softmax(x)
    raise ParameterError(f"unknown activation {kind!r}")


def sigmoid(x):
    # split by sign so exp never overflows
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


# ---------------------------------------------------------------- dropout

def dropout_mask(shape, rate, rng):
    if not 0.0 <= rate < 1.0:
        raise ParameterError(f"dropout rate must be in [0, 1), got {rate}")
    if rate == 0.0:
        return None
    keep = rng.random(shape) >= rate
    return keep / (1.0 - rate)


def inverted_dropout(x, rate, mode, rng):
    """Zero entries with probability ``rate`` in train mode and rescale survivors."""
    if not 0.0 <= rate < 1.0:
        raise ParameterError(f"dropout rate must be in [0, 1), got {rate}")
    x = _as_f64(x)
    if mode == "infer" or rate == 0.0:
        return x
    return x * dropout_mask(x.shape, rate, rng)


# ---------------------------------------------------------------- LSTM

GATES = ("i", "f", "o", "g")


def lstm_stacked(params):
    """Concatenate per-gate matrices into [4u, f], [4u, u], [4u] in i, f, o, g order."""
    W = np.concatenate([params["W_" + g] for g in GATES], axis=0)
    U = np.concatenate([params["U_" + g] for g in GATES], axis=0)
    b = np.concatenate([params["b_" + g] for g in GATES], axis=0)
    return W, U, b


def _check_lstm_shapes(x_t, h_prev, W, U):
    u = U.shape[1]
    if x_t.ndim != 2 or x_t.shape[1] != W.shape[1]:
        raise DimensionError(f"lstm: input {list(x_t.shape)} incompatible with W {list(W.shape)}")
    if h_prev.shape != (x_t.shape[0], u):
        raise DimensionError(f"lstm: state {list(h_prev.shape)} incompatible with U {list(U.shape)}")


def lstm_cell_fwd(x_t, h_in, c_prev, W, U, b):
    u = U.shape[1]
    z = x_t @ W.T + h_in @ U.T + b
    i = sigmoid(z[:, :u])
    f = sigmoid(z[:, u:2 * u])
    o = sigmoid(z[:, 2 * u:3 * u])
    g = np.tanh(z[:, 3 * u:])
    c = f * c_prev + i * g
    tc = np.tanh(c)
    h = o * tc
    return h, c, (i, f, o, g, tc)


def lstm_cell_step(x_t, h_prev, c_prev, params):
    """One gated LSTM update; returns (h, c)."""
    W, U, b = lstm_stacked(params)
    x_t, h_prev, c_prev = _as_f64(x_t), _as_f64(h_prev), _as_f64(c_prev)
    _check_lstm_shapes(x_t, h_prev, W, U)
    if c_prev.shape != h_prev.shape:
        raise DimensionError(f"lstm: cell state {list(c_prev.shape)} vs hidden {list(h_prev.shape)}")
    h, c, _ = lstm_cell_fwd(x_t, h_prev, c_prev, W, U, b)
    return check_finite(h, "lstm_cell_step"), check_finite(c, "lstm_cell_step")


def lstm_layer_fwd(seq, params, return_sequences, recurrent_dropout, mode, rng):
    seq = _as_f64(seq)
    if seq.ndim != 3:
        raise DimensionError(f"lstm: expected [batch, T, features], got {list(seq.shape)}")
    B, T, _ = seq.shape
    if T == 0:
        raise DataError("lstm: empty sequence (T = 0)")
    W, U, b = lstm_stacked(params)
    u = U.shape[1]
    h = np.zeros((B, u))
    c = np.zeros((B, u))
    _check_lstm_shapes(seq[:, 0], h, W, U)
    mask = dropout_mask((B, u), recurrent_dropout, rng) if mode == "train" else None
    hs, steps = [], []
    for t in range(T):
        h_in = h if mask is None else h * mask
        c_prev = c
        h, c, gates = lstm_cell_fwd(seq[:, t], h_in, c_prev, W, U, b)
        steps.append((h_in, c_prev, gates))
        hs.append(h)
    out = np.stack(hs, axis=1) if return_sequences else h
    cache = (seq, W, U, mask, steps, return_sequences)
    return check_finite(out, "lstm_layer_forward"), cache


def lstm_layer_bwd(dout, cache):
    seq, W, U, mask, steps, return_sequences = cache
    B, T, _ = seq.shape
    u = U.shape[1]
    dW = np.zeros_like(W)
    dU = np.zeros_like(U)
    db = np.zeros(4 * u)
    dx = np.zeros_like(seq)
    dh_next = np.zeros((B, u))
    dc_next = np.zeros((B, u))
    for t in range(T - 1, -1, -1):
        h_in, c_prev, (i, f, o, g, tc) = steps[t]
        dh = dh_next + (dout[:, t] if return_sequences else (dout if t == T - 1 else 0.0))
        do = dh * tc
        dc = dc_next + dh * o * (1.0 - tc * tc)
        di = dc * g
        dg = dc * i
        df = dc * c_prev
        dc_next = dc * f
        dz = np.concatenate([di * i * (1 - i), df * f * (1 - f), do * o * (1 - o), dg * (1 - g * g)], axis=1)
        dW += dz.T @ seq[:, t]
        dU += dz.T @ h_in
        db += dz.sum(axis=0)
        dx[:, t] = dz @ W
        dh_in = dz @ U
        dh_next = dh_in if mask is None else dh_in * mask
    return dx, dW, dU, db


def lstm_layer_forward(seq, params, return_sequences, recurrent_dropout, mode, rng):
    """Run the cell over time from zero state, with one recurrent dropout mask per call."""
    return lstm_layer_fwd(seq, params, return_sequences, recurrent_dropout, mode, rng)[0]


# ---------------------------------------------------------------- loss

def _check_labels(logits, labels):
    labels = np.asarray(labels)
    if logits.ndim != 2 or labels.shape != (logits.shape[0],):
        raise DimensionError(f"cross-entropy: logits {list(logits.shape)} vs labels {list(labels.shape)}")
    if labels.dtype.kind not in "iub" and not np.all(labels == np.round(labels)):
        raise DataError("cross-entropy: labels must be integer class indices")
    labels = labels.astype(np.int64)
    if np.any((labels < 0) | (labels >= logits.shape[1])):
        raise DataError(f"cross-entropy: labels must lie in 0..{logits.shape[1] - 1}")
    return labels


def softmax_cross_entropy_grad(logits, labels):
    """Mean cross-entropy and its gradient with respect to the logits."""
    logits = _as_f64(logits)
    labels = _check_labels(logits, labels)
    z = logits - logits.max(axis=1, keepdims=True)
    lse = np.log(np.exp(z).sum(axis=1))
    n = logits.shape[0]
    loss = float(np.mean(lse - z[np.arange(n), labels]))
    d = np.exp(z - lse[:, None])
    d[np.arange(n), labels] -= 1.0
    return loss, check_finite(d / n, "softmax_cross_entropy")


def softmax_cross_entropy(logits, labels):
    return softmax_cross_entropy_grad(logits, labels)[0]
